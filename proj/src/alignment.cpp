#include "gendermine/alignment.hpp"

#include "gendermine/error.hpp"
#include "gendermine/text.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <thread>
#include <tuple>

namespace gendermine::align {

double diagonal_prior(std::size_t i, std::size_t j, std::size_t m, std::size_t n, double tension, double null_prob) {
    if (j > n || i >= m) throw PreconditionError("diagonal_prior: position out of range");
    if (j == 0) return null_prob;
    return prior_row(i, m, n, tension, null_prob)[j];
}

std::vector<double> prior_row(std::size_t i, std::size_t m, std::size_t n, double tension, double null_prob) {
    std::vector<double> row(n + 1, 0.0);
    row[0] = null_prob;
    if (n == 0) return row;
    const double pos = static_cast<double>(i + 1) / static_cast<double>(m);
    double z = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
        row[j] = std::exp(-tension * std::fabs(pos - static_cast<double>(j) / static_cast<double>(n)));
        z += row[j];
    }
    for (std::size_t j = 1; j <= n; ++j) row[j] = (1.0 - null_prob) * row[j] / z;
    return row;
}

std::uint32_t Vocabulary::add(std::string_view word) {
    auto [it, inserted] = ids_.try_emplace(std::string(word), static_cast<std::uint32_t>(words_.size()));
    if (inserted) words_.emplace_back(word);
    return it->second;
}

std::optional<std::uint32_t> Vocabulary::find(std::string_view word) const {
    auto it = ids_.find(std::string(word));
    if (it == ids_.end()) return std::nullopt;
    return it->second;
}

// Training-side access to the model internals.
struct ModelAccess {
    using Table = std::vector<std::unordered_map<std::uint32_t, double>>;

    struct Encoded {
        std::vector<std::uint32_t> source; // without NULL
        std::vector<std::uint32_t> target;
    };

    static void add_vocab(AlignmentModel& m, const BitextPair& p) {
        for (const auto& w : p.source) m.source_vocab_.add(w);
        for (const auto& w : p.target) m.target_vocab_.add(w);
    }

    static void finish_vocab(AlignmentModel& m) { m.table_.resize(m.source_vocab_.size()); }

    static std::optional<Encoded> encode(const AlignmentModel& m, const BitextPair& p) {
        if (p.source.empty() || p.target.empty()) return std::nullopt;
        Encoded e;
        for (const auto& w : p.source) e.source.push_back(*m.source_vocab_.find(w));
        for (const auto& w : p.target) e.target.push_back(*m.target_vocab_.find(w));
        return e;
    }

    static double t(const AlignmentModel& m, std::uint32_t e, std::uint32_t f) {
        if (m.uniform_) return 1.0 / static_cast<double>(m.target_vocab_.size());
        const auto& row = m.table_[e];
        auto it = row.find(f);
        return it == row.end() ? AlignmentModel::kSmoothingFloor : it->second;
    }

    // Adds one pair's posterior counts into `counts`; returns its log-likelihood.
    static double accumulate(const AlignmentModel& m, const Encoded& p, Table* counts) {
        const auto n = p.source.size();
        const auto len_m = p.target.size();
        const auto& params = m.params_;
        double ll = 0.0;
        std::vector<double> score(n + 1);
        for (std::size_t i = 0; i < len_m; ++i) {
            const auto prior = prior_row(i, len_m, n, params.tension, params.null_prob);
            const auto f = p.target[i];
            double z = 0.0;
            for (std::size_t j = 0; j <= n; ++j) {
                score[j] = prior[j] * t(m, j == 0 ? 0 : p.source[j - 1], f);
                z += score[j];
            }
            ll += std::log(z);
            if (counts)
                for (std::size_t j = 0; j <= n; ++j) (*counts)[j == 0 ? 0 : p.source[j - 1]][f] += score[j] / z;
        }
        return ll;
    }

    static void set_table(AlignmentModel& m, Table counts) {
        for (auto& row : counts) {
            double total = 0.0;
            std::vector<std::pair<std::uint32_t, double>> sorted(row.begin(), row.end());
            std::sort(sorted.begin(), sorted.end());
            for (const auto& [f, c] : sorted) total += c;
            if (total <= 0.0) {
                row.clear();
                continue;
            }
            for (auto& [f, c] : row) c /= total;
        }
        m.table_ = std::move(counts);
        m.uniform_ = false;
    }

    static const Vocabulary& source_vocab(const AlignmentModel& m) { return m.source_vocab_; }
    static const Vocabulary& target_vocab(const AlignmentModel& m) { return m.target_vocab_; }
};

AlignmentModel::AlignmentModel(AlignmentParams params) : params_(params) {
    if (!(params_.tension > 0.0)) throw PreconditionError("tension must be positive");
    if (!(params_.null_prob >= 0.0 && params_.null_prob < 1.0)) throw PreconditionError("null_prob must be in [0,1)");
    source_vocab_.add(kNullWord);
    table_.resize(1);
}

double AlignmentModel::translation_prob(std::string_view source, std::string_view target) const {
    const auto e = source_vocab_.find(source);
    const auto f = target_vocab_.find(target);
    if (!f) return kSmoothingFloor;
    if (uniform_) return 1.0 / static_cast<double>(target_vocab_.size());
    if (!e) return kSmoothingFloor;
    return ModelAccess::t(*this, *e, *f);
}

double AlignmentModel::row_sum(std::string_view source) const {
    const auto e = source_vocab_.find(source);
    if (!e) return 0.0;
    double s = 0.0;
    for (const auto& [f, p] : table_[*e]) s += p;
    return s;
}

std::vector<std::string> AlignmentModel::source_words() const {
    std::vector<std::string> out;
    for (std::uint32_t i = 1; i < source_vocab_.size(); ++i) out.push_back(source_vocab_.word(i));
    return out;
}

namespace {

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

using Words = std::vector<std::string>;

// Scores prior * t for every j, using the string-keyed model interface so that
// decoding handles words never seen in training.
std::vector<double> link_scores(const AlignmentModel& model, const Words& source, const Words& target,
                                std::size_t i) {
    const auto n = source.size();
    const auto& p = model.params();
    auto scores = prior_row(i, target.size(), n, p.tension, p.null_prob);
    for (std::size_t j = 0; j <= n; ++j)
        scores[j] *= model.translation_prob(j == 0 ? AlignmentModel::kNullWord : std::string_view(source[j - 1]),
                                            target[i]);
    return scores;
}

} // namespace

std::string AlignmentModel::serialize() const {
    std::vector<std::tuple<std::string, std::string, double>> rows;
    for (std::uint32_t e = 0; e < table_.size(); ++e)
        for (const auto& [f, p] : table_[e]) rows.emplace_back(source_vocab_.word(e), target_vocab_.word(f), p);
    std::sort(rows.begin(), rows.end());
    std::ostringstream out;
    out << "# ibm2-diagonal tension=" << format_double(params_.tension)
        << " null_prob=" << format_double(params_.null_prob) << " iterations=" << params_.iterations
        << " target_vocab=" << target_vocab_.size() << "\n";
    for (const auto& [e, f, p] : rows) out << e << '\t' << f << '\t' << format_double(std::log(p)) << '\n';
    return out.str();
}

AlignmentModel AlignmentModel::deserialize(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string header;
    if (!std::getline(in, header) || !header.starts_with("# ibm2-diagonal"))
        throw std::runtime_error("alignment model: missing header");
    AlignmentParams params;
    std::size_t vocab_hint = 0;
    std::istringstream hs(header.substr(std::string_view("# ibm2-diagonal").size()));
    std::string field;
    while (hs >> field) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) continue;
        const auto key = field.substr(0, eq);
        const auto value = field.substr(eq + 1);
        if (key == "tension") params.tension = std::stod(value);
        else if (key == "null_prob") params.null_prob = std::stod(value);
        else if (key == "iterations") params.iterations = std::stoi(value);
        else if (key == "target_vocab") vocab_hint = std::stoul(value);
    }
    AlignmentModel model(params);
    std::vector<std::tuple<std::uint32_t, std::uint32_t, double>> entries;
    std::string line;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const auto parts = text::split(line, '\t');
        if (parts.size() != 3) throw std::runtime_error("alignment model: bad row at line " + std::to_string(lineno));
        const auto e = model.source_vocab_.add(parts[0]);
        const auto f = model.target_vocab_.add(parts[1]);
        entries.emplace_back(e, f, std::exp(std::stod(parts[2])));
    }
    if (vocab_hint != 0 && vocab_hint != model.target_vocab_.size())
        throw std::runtime_error("alignment model: target vocabulary size differs from header");
    model.table_.assign(model.source_vocab_.size(), {});
    for (const auto& [e, f, p] : entries) model.table_[e][f] = p;
    model.uniform_ = false;
    return model;
}

AlignmentModel initial_model(std::span<const BitextPair> bitext, const AlignmentParams& params) {
    AlignmentModel model(params);
    for (const auto& p : bitext)
        if (!p.source.empty() && !p.target.empty()) ModelAccess::add_vocab(model, p);
    ModelAccess::finish_vocab(model);
    return model;
}

namespace {

constexpr std::size_t kChunks = 16;

struct EStep {
    ModelAccess::Table counts;
    double log_likelihood = 0.0;
};

EStep run_estep(const AlignmentModel& model, const std::vector<ModelAccess::Encoded>& pairs, unsigned threads) {
    const auto vocab = ModelAccess::source_vocab(model).size();
    std::vector<EStep> partial(kChunks);
    auto work = [&](std::size_t chunk) {
        auto& part = partial[chunk];
        part.counts.assign(vocab, {});
        const auto begin = pairs.size() * chunk / kChunks;
        const auto end = pairs.size() * (chunk + 1) / kChunks;
        for (auto k = begin; k < end; ++k) part.log_likelihood += ModelAccess::accumulate(model, pairs[k], &part.counts);
    };
    if (threads <= 1) {
        for (std::size_t c = 0; c < kChunks; ++c) work(c);
    } else {
        std::vector<std::jthread> pool;
        std::atomic<std::size_t> next{0};
        for (unsigned t = 0; t < std::min<unsigned>(threads, kChunks); ++t)
            pool.emplace_back([&] {
                for (auto c = next++; c < kChunks; c = next++) work(c);
            });
    }
    EStep total;
    total.counts.assign(vocab, {});
    for (auto& part : partial) {
        total.log_likelihood += part.log_likelihood;
        for (std::size_t e = 0; e < vocab; ++e)
            for (const auto& [f, c] : part.counts[e]) total.counts[e][f] += c;
    }
    return total;
}

std::vector<ModelAccess::Encoded> encode_all(const AlignmentModel& model, std::span<const BitextPair> bitext,
                                             std::size_t* skipped) {
    std::vector<ModelAccess::Encoded> out;
    for (const auto& p : bitext) {
        auto e = ModelAccess::encode(model, p);
        if (e) out.push_back(std::move(*e));
        else if (skipped) ++*skipped;
    }
    return out;
}

} // namespace

ExpectedCounts expected_counts(const AlignmentModel& model, std::span<const BitextPair> bitext) {
    const auto& sv = ModelAccess::source_vocab(model);
    const auto& tv = ModelAccess::target_vocab(model);
    for (const auto& p : bitext) {
        for (const auto& w : p.source)
            if (!sv.find(w)) throw PreconditionError("expected_counts: source word outside model vocabulary: " + w);
        for (const auto& w : p.target)
            if (!tv.find(w)) throw PreconditionError("expected_counts: target word outside model vocabulary: " + w);
    }
    const auto step = run_estep(model, encode_all(model, bitext, nullptr), 1);
    ExpectedCounts out;
    out.log_likelihood = step.log_likelihood;
    for (std::uint32_t e = 0; e < step.counts.size(); ++e)
        for (const auto& [f, c] : step.counts[e]) out.counts[{sv.word(e), tv.word(f)}] += c;
    return out;
}

double log_likelihood(const AlignmentModel& model, std::span<const BitextPair> bitext) {
    double ll = 0.0;
    for (const auto& p : bitext) {
        if (p.source.empty() || p.target.empty()) continue;
        for (std::size_t i = 0; i < p.target.size(); ++i) {
            double z = 0.0;
            for (double s : link_scores(model, p.source, p.target, i)) z += s;
            ll += std::log(z);
        }
    }
    return ll;
}

TrainResult em_train(std::span<const BitextPair> bitext, const AlignmentParams& params, unsigned threads) {
    if (bitext.empty()) throw PreconditionError("em_train: empty bitext");
    if (params.iterations < 1) throw PreconditionError("em_train: iterations must be at least 1");
    if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
    TrainResult result{initial_model(bitext, params), {}, 0};
    const auto pairs = encode_all(result.model, bitext, &result.skipped_pairs);
    if (pairs.empty()) throw PreconditionError("em_train: every pair has an empty side");
    for (int it = 0; it < params.iterations; ++it) {
        auto step = run_estep(result.model, pairs, threads);
        result.log_likelihood.push_back(step.log_likelihood);
        ModelAccess::set_table(result.model, std::move(step.counts));
    }
    double final_ll = 0.0;
    for (const auto& p : pairs) final_ll += ModelAccess::accumulate(result.model, p, nullptr);
    result.log_likelihood.push_back(final_ll);
    return result;
}

std::vector<double> link_posteriors(const AlignmentModel& model, const Words& source, const Words& target,
                                    std::size_t target_index) {
    if (target_index >= target.size()) throw PreconditionError("link_posteriors: target index out of range");
    auto scores = link_scores(model, source, target, target_index);
    double z = 0.0;
    for (double s : scores) z += s;
    for (double& s : scores) s /= z;
    return scores;
}

std::vector<std::optional<std::size_t>> viterbi_align(const AlignmentModel& model, const Words& source,
                                                      const Words& target) {
    std::vector<std::optional<std::size_t>> links;
    links.reserve(target.size());
    for (std::size_t i = 0; i < target.size(); ++i) {
        const auto scores = link_scores(model, source, target, i);
        std::size_t best = 0;
        for (std::size_t j = 1; j < scores.size(); ++j)
            if (scores[j] > scores[best]) best = j;
        links.push_back(best == 0 ? std::nullopt : std::optional<std::size_t>(best - 1));
    }
    return links;
}

ProjectedFocus project_focus(const AlignmentModel& model, const Words& source, std::size_t focus_index,
                             const Words& target) {
    if (focus_index >= source.size()) throw PreconditionError("project_focus: focus index out of range");
    const auto links = viterbi_align(model, source, target);
    ProjectedFocus best;
    for (std::size_t i = 0; i < links.size(); ++i) {
        if (links[i] != focus_index) continue;
        const double post = link_posteriors(model, source, target, i)[focus_index + 1];
        if (!best.posterior || post > *best.posterior) {
            best.target_index = i;
            best.posterior = post;
        }
    }
    return best;
}

std::string to_pharaoh(const std::vector<std::optional<std::size_t>>& links) {
    std::string out;
    for (std::size_t i = 0; i < links.size(); ++i) {
        if (!links[i]) continue;
        if (!out.empty()) out.push_back(' ');
        out += std::to_string(*links[i]) + "-" + std::to_string(i);
    }
    return out;
}

} // namespace gendermine::align
