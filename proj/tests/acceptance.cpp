// Acceptance suite: one PASS/FAIL line per release criterion. Exit status is
// the number of failed criteria.

#include "gendermine/alignment.hpp"
#include "gendermine/corpus.hpp"
#include "gendermine/dataset.hpp"
#include "gendermine/divergence.hpp"
#include "gendermine/filter.hpp"
#include "gendermine/gender.hpp"
#include "gendermine/io.hpp"
#include "gendermine/pipeline.hpp"
#include "gendermine/review.hpp"
#include "gendermine/text.hpp"
#include "synthetic_backend.hpp"
#include "test_paths.hpp"

#include <httplib.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <thread>

using namespace gendermine;
using nlohmann::json;
namespace fs = std::filesystem;
namespace gt = gendermine::testing;
namespace pl = gendermine::pipeline;

namespace {

// Tolerances and limits fixed by the release criteria.
constexpr double kEmTolerance = 1e-9;
constexpr double kNullPosterior = 0.92;
constexpr double kFixtureSeconds = 60.0;
constexpr std::size_t kScanCap = 100;
constexpr std::size_t kAcceptCap = 10;
constexpr double kHeldOutAccuracy = 0.95;
constexpr std::size_t kConcurrentDecisions = 1000;

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void fail(const std::string& why) {
        if (pass) detail.str("");
        else detail << "; ";
        pass = false;
        detail << why;
    }
};

fs::path golden() { return gt::source_dir() / "tests" / "golden" / "fixture_run"; }
fs::path fixtures() { return gt::source_dir() / "fixtures"; }

pl::RunConfig fixture_config() { return pl::load_config(fixtures() / "fixture.conf"); }

FilterLexicons bundled_lexicons() {
    const std::vector<fs::path> lists{gt::data_dir() / "wordlists/gender_specific_full.json",
                                      gt::data_dir() / "wordlists/male_word_file.txt",
                                      gt::data_dir() / "wordlists/female_word_file.txt"};
    return {load_gendered_list(lists), load_name_list(gt::data_dir() / "names/first_names.txt")};
}

std::vector<std::vector<std::string>> tsv_rows(const fs::path& path) {
    std::vector<std::vector<std::string>> rows;
    io::for_each_line(path, [&](std::string_view line, std::size_t) {
        if (!line.starts_with('#')) rows.push_back(text::split(line, '\t'));
    });
    return rows;
}

// --- 1. fixture determinism ---------------------------------------------

void fixture_determinism(Outcome& out) {
    gt::TempDir dir("accept-fixture");
    pl::RunOptions opts;
    opts.resume = false;
    const auto start = std::chrono::steady_clock::now();
    pl::run_pipeline(fixture_config(), dir / "run", opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const auto want = pl::artifact_files(golden());
    const auto got = pl::artifact_files(dir / "run");
    if (want.empty()) out.fail("golden run is empty");
    if (got != want) out.fail("artifact file sets differ");
    std::size_t differing = 0;
    for (const auto& f : want)
        if (!fs::exists(dir / "run" / f) || io::read_file(dir / "run" / f) != io::read_file(golden() / f)) {
            if (differing++ == 0) out.fail("first differing artifact: " + f.generic_string());
        }
    if (differing) out.fail(std::to_string(differing) + " artifacts differ");
    if (secs >= kFixtureSeconds) out.fail("took " + std::to_string(secs) + " s");
    if (out.pass) out.detail << want.size() << " artifacts byte-identical in " << secs << " s";
}

// --- 2. perturbation caps -----------------------------------------------

std::size_t hamming(const json& a, const json& b) {
    if (a.size() != b.size()) return std::max(a.size(), b.size());
    std::size_t d = 0;
    for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
    return d;
}

void perturbation_caps(Outcome& out) {
    gt::TempDir dir("accept-caps");
    auto synth = std::make_shared<gt::SyntheticBackend>();
    pl::RunOptions opts;
    opts.resume = false;
    for (auto c : kCapabilities) opts.backends[c] = synth;
    pl::run_pipeline(fixture_config(), dir / "run", opts);
    const pl::RunLayout L{dir / "run"};

    if (io::read_file(L.pairs()) != io::read_file(golden() / "pairs.jsonl"))
        out.fail("instrumented run did not reproduce the golden pairs");

    const auto calls = synth->fill_mask_calls();
    std::size_t max_returned = 0;
    for (const auto& c : calls) {
        max_returned = std::max(max_returned, c.returned);
        if (c.top_k > kScanCap || c.returned > kScanCap) out.fail("fill_mask asked for or returned > 100 candidates");
    }
    std::size_t sentences = 0, max_scanned = 0, max_accepted = 0;
    std::map<std::string, std::size_t> accepted_by_sentence;
    for (const auto& t : io::read_jsonl(L.perturb_trace())) {
        ++sentences;
        max_scanned = std::max(max_scanned, t.at("scanned").get<std::size_t>());
        max_accepted = std::max(max_accepted, t.at("accepted").get<std::size_t>());
    }
    if (calls.size() != sentences) out.fail("fill_mask calls != traced sentences");
    if (max_scanned > kScanCap) out.fail("a sentence scanned " + std::to_string(max_scanned));
    if (max_accepted > kAcceptCap) out.fail("a sentence accepted " + std::to_string(max_accepted));

    // Count emitted pairs per sentence directly, and check each pair's two
    // source sides as sent to translation differ in exactly one token.
    std::size_t pairs = 0;
    for (const auto& p : io::read_jsonl(L.pairs())) {
        ++pairs;
        ++accepted_by_sentence[p.at("sentence_id").get<std::string>()];
    }
    for (const auto& [sid, n] : accepted_by_sentence)
        if (n > kAcceptCap) out.fail("sentence " + sid + " emitted " + std::to_string(n) + " pairs");

    std::size_t checked = 0;
    for (auto l : fixture_config().languages) {
        std::map<std::string, std::map<std::string, json>> sides;
        for (const auto& t : io::read_jsonl(L.translations(l)))
            sides[t.at("pair_id").get<std::string>()][t.at("side").get<std::string>()] = t.at("source_tokens");
        for (const auto& [id, s] : sides) {
            if (!s.contains("original") || !s.contains("substituted")) {
                out.fail("pair " + id + " lacks a side");
                continue;
            }
            if (hamming(s.at("original"), s.at("substituted")) != 1) out.fail("pair " + id + " is not minimal");
            ++checked;
        }
    }
    for (const auto& r : io::read_jsonl(L.records())) {
        if (hamming(r.at("source_original"), r.at("source_substituted")) != 1)
            out.fail("record " + r.at("pair_id").get<std::string>() + " is not minimal");
        ++checked;
    }
    if (pairs == 0) out.fail("no pairs emitted");
    if (out.pass)
        out.detail << sentences << " sentences, max scanned " << max_scanned << ", max accepted " << max_accepted
                   << ", " << pairs << " pairs, " << checked << " sides/records at Hamming distance 1";
}

// --- 3. filter gold set -------------------------------------------------

void filter_gold(Outcome& out) {
    const auto lex = bundled_lexicons();
    std::size_t n = 0, correct = 0;
    bool saw_doctor = false;
    for (const auto& cols : tsv_rows(gt::test_data("filter_gold.tsv"))) {
        ++n;
        const auto record = make_sentence(make_tokens(text::split(cols.at(0), ' ')), "gold");
        std::vector<NerSpan> ner;
        for (const auto& idx : text::split(cols.at(1), ','))
            if (!idx.empty()) ner.push_back({std::stoul(idx), NerLabel::Person});
        std::vector<Upos> pos;
        for (const auto& tag : text::split(cols.at(2), ' ')) pos.push_back(parse_upos(tag).value());
        const auto o = filter_sentence(record, ner, pos, lex);
        std::string got = std::holds_alternative<SourceSentence>(o)
                              ? "ACCEPT " + std::to_string(std::get<SourceSentence>(o).focus_index)
                              : "REJECT " + std::string(reject_reason_name(std::get<Rejection>(o).reason));
        if (got == cols.at(3)) ++correct;
        else out.fail("'" + cols.at(0) + "': got " + got + ", gold " + cols.at(3));
        if (cols.at(0) == "a doctor works in a hospital ." && got == "ACCEPT 1") saw_doctor = true;
    }
    if (n != 50) out.fail("gold set has " + std::to_string(n) + " rows");
    if (!saw_doctor) out.fail("doctor sentence not accepted");
    if (out.pass) out.detail << correct << "/" << n << " decisions match gold";
}

// --- 4. EM aligner ------------------------------------------------------

using align::AlignmentModel;
using align::AlignmentParams;
using align::BitextPair;

double ref_prior(std::size_t i1, std::size_t j, std::size_t m, std::size_t n, double lambda, double p0) {
    if (j == 0) return p0;
    double z = 0.0;
    for (std::size_t k = 1; k <= n; ++k) z += std::exp(-lambda * std::fabs(double(i1) / m - double(k) / n));
    return (1.0 - p0) * std::exp(-lambda * std::fabs(double(i1) / m - double(j) / n)) / z;
}

// Reference EM: every alignment vector enumerated.
struct EnumerationEm {
    using Table = std::map<std::pair<std::string, std::string>, double>;
    double lambda, p0;
    std::size_t vocab;
    bool uniform = true;
    Table t;

    double prob(const std::string& e, const std::string& f) const {
        if (uniform) return 1.0 / double(vocab);
        auto it = t.find({e, f});
        return it == t.end() ? 0.0 : it->second;
    }

    std::pair<Table, double> e_step(const std::vector<BitextPair>& bitext) const {
        const std::string null(AlignmentModel::kNullWord);
        Table counts;
        double ll = 0.0;
        for (const auto& p : bitext) {
            const auto m = p.target.size(), n = p.source.size();
            std::vector<std::size_t> a(m, 0);
            std::vector<std::pair<std::vector<std::size_t>, double>> joint;
            double total = 0.0;
            for (;;) {
                double pr = 1.0;
                for (std::size_t i = 0; i < m; ++i)
                    pr *= ref_prior(i + 1, a[i], m, n, lambda, p0) * prob(a[i] ? p.source[a[i] - 1] : null, p.target[i]);
                joint.emplace_back(a, pr);
                total += pr;
                std::size_t k = 0;
                while (k < m && ++a[k] > n) a[k++] = 0;
                if (k == m) break;
            }
            ll += std::log(total);
            for (const auto& [al, pr] : joint)
                for (std::size_t i = 0; i < m; ++i) counts[{al[i] ? p.source[al[i] - 1] : null, p.target[i]}] += pr / total;
        }
        return {counts, ll};
    }

    void m_step(const Table& counts) {
        std::map<std::string, double> totals;
        for (const auto& [k, c] : counts) totals[k.first] += c;
        t.clear();
        for (const auto& [k, c] : counts) t[k] = c / totals[k.first];
        uniform = false;
    }
};

std::vector<BitextPair> random_bitext(std::mt19937_64& rng, std::size_t pairs, std::size_t max_len, std::size_t vocab) {
    std::vector<BitextPair> out;
    for (std::size_t k = 0; k < pairs; ++k) {
        BitextPair p;
        const auto n = 1 + rng() % max_len, m = 1 + rng() % max_len;
        for (std::size_t j = 0; j < n; ++j) p.source.push_back("e" + std::to_string(rng() % vocab));
        for (std::size_t i = 0; i < m; ++i) p.target.push_back("f" + std::to_string(rng() % vocab));
        out.push_back(std::move(p));
    }
    return out;
}

void em_aligner(Outcome& out) {
    const AlignmentParams params{4.0, 0.08, 5};

    // (a) monotone log-likelihood.
    std::mt19937_64 rng(7);
    double worst_drop = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        const auto bitext = random_bitext(rng, 2 + rng() % 12, 8, 2 + rng() % 9);
        const auto ll = align::em_train(bitext, params, 2).log_likelihood;
        for (std::size_t k = 1; k < ll.size(); ++k) worst_drop = std::max(worst_drop, ll[k - 1] - ll[k]);
    }
    if (worst_drop > kEmTolerance) out.fail("log-likelihood dropped by " + std::to_string(worst_drop));

    // (b) expected counts against enumeration, m,n <= 4 and vocab <= 5.
    double worst_count = 0.0;
    std::size_t corpora = 0;
    for (int trial = 0; trial < 200; ++trial, ++corpora) {
        const auto bitext = random_bitext(rng, 1 + rng() % 4, 4, 1 + rng() % 5);
        std::set<std::string> tv;
        for (const auto& p : bitext) tv.insert(p.target.begin(), p.target.end());
        EnumerationEm oracle{params.tension, params.null_prob, tv.size(), true, {}};
        for (int iter = 0; iter <= 3; ++iter) {
            AlignmentParams p = params;
            p.iterations = std::max(iter, 1);
            const auto model = iter == 0 ? align::initial_model(bitext, p) : align::em_train(bitext, p, 1).model;
            const auto got = align::expected_counts(model, bitext);
            const auto [want, ll] = oracle.e_step(bitext);
            worst_count = std::max(worst_count, std::fabs(got.log_likelihood - ll));
            for (const auto& [k, c] : want) {
                auto it = got.counts.find(k);
                worst_count = std::max(worst_count, std::fabs((it == got.counts.end() ? 0.0 : it->second) - c));
            }
            for (const auto& [k, c] : got.counts)
                if (!want.contains(k)) worst_count = std::max(worst_count, std::fabs(c));
            oracle.m_step(want);
        }
    }
    if (worst_count > kEmTolerance) out.fail("expected counts off by " + std::to_string(worst_count));

    // (c) copy corpus.
    std::vector<BitextPair> copy;
    for (int k = 0; k < 40; ++k) {
        BitextPair p;
        const auto n = 2 + rng() % 6;
        for (std::size_t j = 0; j < n; ++j) p.source.push_back("w" + std::to_string(rng() % 12));
        p.target = p.source;
        copy.push_back(std::move(p));
    }
    const auto copy_model = align::em_train(copy, params, 1).model;
    std::size_t wrong = 0;
    for (const auto& p : copy) {
        const auto links = align::viterbi_align(copy_model, p.source, p.target);
        for (std::size_t i = 0; i < links.size(); ++i)
            if (!links[i] || p.source[*links[i]] != p.target[i]) ++wrong;
    }
    if (wrong) out.fail(std::to_string(wrong) + " copy-corpus links off the identity");

    // (d) single-pair NULL posterior under the uniform initial model.
    const std::vector<BitextPair> one{{{"a"}, {"x"}}};
    const auto post = align::link_posteriors(align::initial_model(one, params), {"a"}, {"x"}, 0);
    if (std::fabs(post.at(1) - kNullPosterior) > kEmTolerance)
        out.fail("single-pair source posterior " + std::to_string(post.at(1)));

    if (out.pass)
        out.detail << "max LL drop " << worst_drop << ", max count error " << worst_count << " over " << corpora
                   << " corpora, copy corpus identity, posterior " << post.at(1);
}

// --- 5. gender tagger ---------------------------------------------------

struct GenderItem {
    Language language;
    std::vector<std::string> tokens;
    std::size_t index;
    Gender gold;
};

std::vector<GenderItem> gender_items(const std::string& file) {
    std::vector<GenderItem> items;
    for (const auto& cols : tsv_rows(gt::test_data(file))) {
        GenderItem item{parse_language(cols.at(0)), {}, 0, parse_gender(cols.at(3))};
        for (const auto& t : tokenize(cols.at(1))) item.tokens.push_back(t.surface);
        const auto it = std::find(item.tokens.begin(), item.tokens.end(), cols.at(2));
        if (it == item.tokens.end()) throw std::runtime_error(file + ": focus '" + cols.at(2) + "' not in sentence");
        item.index = static_cast<std::size_t>(it - item.tokens.begin());
        items.push_back(std::move(item));
    }
    return items;
}

void gender_tagger(Outcome& out) {
    std::map<Language, GenderTagger> full, layered;
    for (auto l : kLanguages) {
        full.emplace(l, load_tagger(l, gt::data_dir() / "gender"));
        layered.emplace(l, load_tagger(l, gt::data_dir() / "gender", TaggerOptions{false, 3}));
    }
    const auto gold = gender_items("gender_gold.tsv");
    std::size_t gold_ok = 0;
    for (const auto& item : gold) {
        if (full.at(item.language).tag(item.tokens, item.index).value == item.gold) ++gold_ok;
        else out.fail("gold item " + item.tokens[item.index] + " mistagged");
    }
    if (gold.size() != 12) out.fail("gold set has " + std::to_string(gold.size()) + " items");

    const auto held = gender_items("gender_heldout.tsv");
    std::size_t held_ok = 0;
    for (const auto& item : held) {
        const auto tag = layered.at(item.language).tag(item.tokens, item.index);
        if (tag.evidence == Evidence::Lexicon) out.fail("lexicon consulted with the lexicon layer off");
        if (tag.value == item.gold) ++held_ok;
    }
    const double acc = held.empty() ? 0.0 : double(held_ok) / double(held.size());
    if (held.size() != 200) out.fail("held-out set has " + std::to_string(held.size()) + " items");
    if (acc < kHeldOutAccuracy) out.fail("held-out accuracy " + std::to_string(acc));
    if (out.pass) out.detail << gold_ok << "/12 gold, held-out " << held_ok << "/" << held.size();
}

// --- 6. divergence classification --------------------------------------

void divergence(Outcome& out) {
    // Every side state: the three genders, UNKNOWN, and unprojected.
    const std::vector<std::optional<Gender>> states{Gender::Masculine, Gender::Feminine, Gender::Neuter, Gender::Unknown,
                                                    std::nullopt};
    auto make = [](std::optional<Gender> g, Language l, Side s) {
        TranslationOutcome o;
        o.pair_id = "p";
        o.language = l;
        o.side = s;
        o.translation_tokens = {"w"};
        if (g) {
            o.projection = {0, 1.0};
            o.gender = GenderTag{*g, *g == Gender::Unknown ? Evidence::None : Evidence::Suffix};
        }
        return o;
    };
    auto expected = [](std::optional<Gender> a, std::optional<Gender> b, Language l) -> std::pair<Risk, std::string> {
        if (!a || !b) return {Risk::Indeterminate, "UNPROJECTED"};
        if (*a == Gender::Unknown || *b == Gender::Unknown) return {Risk::Indeterminate, "UNKNOWN_GENDER"};
        if (*a == *b) return {Risk::NotAtRisk, "SAME_GENDER"};
        if ((*a == Gender::Neuter || *b == Gender::Neuter) && l != Language::De)
            return {Risk::Indeterminate, "NEUTER_MISMATCH"};
        return {Risk::AtRisk, "GENDER_DIVERGENCE"};
    };
    std::size_t cells = 0;
    for (auto l : kLanguages)
        for (const auto& a : states)
            for (const auto& b : states) {
                ++cells;
                RiskLabel ab, ba;
                try {
                    ab = classify(make(a, l, Side::Original), make(b, l, Side::Substituted));
                    ba = classify(make(b, l, Side::Original), make(a, l, Side::Substituted));
                } catch (const std::exception& e) {
                    out.fail(std::string("not total: ") + e.what());
                    continue;
                }
                const auto [risk, reason] = expected(a, b, l);
                if (ab.value != risk || ab.reason != reason) out.fail("wrong label in " + std::string(language_code(l)));
                if (ab.value != ba.value || ab.reason != ba.reason) out.fail("asymmetric in " + std::string(language_code(l)));
            }
    if (out.pass) out.detail << cells << " cells across 4 languages, symmetric and total";
}

// --- 7. ratio oracle ----------------------------------------------------

// Recounts stats.json from the raw outcome rows without the library's code.
json recount(const fs::path& run, const std::vector<Language>& languages) {
    json langs = json::object();
    for (auto l : languages) {
        const std::string code(language_code(l));
        std::map<std::string, std::pair<std::size_t, std::size_t>> tallies[2];
        const pl::RunLayout L{run};
        io::for_each_line(L.outcomes(l), [&](std::string_view line, std::size_t) {
            const auto row = json::parse(line);
            const auto label = row.at("label").get<std::string>();
            const int group = label == "AT_RISK" ? 0 : label == "NOT_AT_RISK" ? 1 : -1;
            if (group < 0) return;
            auto& t = tallies[group][row.at("focus_surface").get<std::string>()];
            const auto g = row.at("gender").get<std::string>();
            t.first += g == "MASCULINE";
            t.second += g == "FEMININE";
        });
        json entry = json::object();
        for (int group = 0; group < 2; ++group) {
            std::vector<std::pair<std::string, std::pair<std::size_t, std::size_t>>> rows(tallies[group].begin(),
                                                                                           tallies[group].end());
            std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
                return a.second.first + a.second.second > b.second.first + b.second.second;
            });
            json arr = json::array();
            for (const auto& [form, mf] : rows)
                arr.push_back({{"form", form},
                               {"language", code},
                               {"masculine", mf.first},
                               {"feminine", mf.second},
                               {"ratio", std::to_string(mf.first) + ":" + std::to_string(mf.second)}});
            entry[group == 0 ? "positive" : "negative"] = arr;
        }
        langs[code] = entry;
    }
    return {{"languages", langs}};
}

void ratio_oracle(Outcome& out) {
    gt::TempDir dir("accept-ratio");
    const auto cfg = fixture_config();
    pl::RunOptions opts;
    pl::run_pipeline(cfg, dir / "run", opts);
    std::size_t forms = 0;
    for (const auto& run : {golden(), dir.path() / "run"}) {
        const auto stats = io::read_json(run / "stats.json");
        const auto want = recount(run, cfg.languages);
        if (stats != want) out.fail("stats.json differs from the recount in " + run.filename().string());
        for (auto& [code, groups] : want.at("languages").items())
            forms += groups.at("positive").size() + groups.at("negative").size();
    }
    // Display convention on constructed tallies.
    std::vector<OutcomeRow> rows;
    for (int k = 0; k < 36; ++k)
        rows.push_back({"p" + std::to_string(k), Side::Substituted, Language::Fr, "nurse", "infirmière", Gender::Feminine,
                        Risk::AtRisk});
    const auto r = compute_ratios(rows, RatioGroup::Positive);
    if (r.size() != 1 || r[0].ratio_display() != "0:36") out.fail("display of 0 M / 36 F is not \"0:36\"");
    if (out.pass) out.detail << forms << " form rows match the recount; 0 M / 36 F displays as 0:36";
}

// --- 8. quota / export --------------------------------------------------

ExampleRecord clone_as(const ExampleRecord& base, const std::string& id, Language l, AnnotationState st,
                       std::optional<std::int64_t> at, std::optional<std::size_t> draw) {
    ExampleRecord r = base;
    r.pair_id = id;
    const auto v = r.languages.begin()->second;
    r.languages.clear();
    auto& view = r.languages[l];
    view = v;
    view.label = draw ? RiskLabel{Risk::NotAtRisk, "SAME_GENDER"} : RiskLabel{Risk::AtRisk, "GENDER_DIVERGENCE"};
    view.annotation = st;
    view.accepted_at_ms = at;
    view.negative_draw = draw;
    return r;
}

void quota_export(Outcome& out) {
    const auto base = pl::load_records(golden() / "records.jsonl").at(0);
    auto id = [](const char* prefix, int k) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%s%04d", prefix, k);
        return std::string(buf);
    };
    gt::TempDir dir("accept-export");

    // Shortfall: 59 accepted Russian positives.
    std::vector<ExampleRecord> ru;
    for (int k = 0; k < 59; ++k) ru.push_back(clone_as(base, id("r", k), Language::Ru, AnnotationState::Accepted, 100 + k, {}));
    for (int k = 0; k < 30; ++k) ru.push_back(clone_as(base, id("x", k), Language::Ru, AnnotationState::RejectedOther, {}, {}));
    const auto short_res = export_dataset(ru, Language::Ru, Quotas{}, dir / "ru");
    if (short_res.positives != 59) out.fail("shortfall exported " + std::to_string(short_res.positives));
    bool warned = false;
    for (const auto& w : short_res.warnings) warned |= w.find("59") != std::string::npos;
    if (!warned) out.fail("no shortfall warning");

    // Overflow: 120 accepted French positives; oracle picks by (time, id).
    std::vector<ExampleRecord> fr;
    std::mt19937_64 rng(5);
    std::vector<std::pair<std::int64_t, std::string>> order;
    for (int k = 0; k < 120; ++k) {
        const std::int64_t at = 1000 + static_cast<std::int64_t>(rng() % 40); // many ties
        fr.push_back(clone_as(base, id("f", (k * 37) % 120), Language::Fr, AnnotationState::Accepted, at, {}));
        order.emplace_back(at, fr.back().pair_id);
    }
    std::sort(order.begin(), order.end());
    std::set<std::string> want;
    for (std::size_t k = 0; k < 100; ++k) want.insert(order[k].second);
    const auto sel = select_for_export(fr, Language::Fr, Quotas{});
    std::set<std::string> got;
    for (const auto* r : sel.positives) got.insert(r->pair_id);
    if (sel.positives.size() != 100) out.fail("overflow exported " + std::to_string(sel.positives.size()));
    if (got != want) out.fail("overflow selection differs from the (timestamp, pair_id) order");

    // Negatives: the sampling stage and the export are seed-deterministic.
    gt::TempDir a("accept-neg-a"), b("accept-neg-b");
    auto cfg = fixture_config();
    pl::RunOptions opts;
    pl::run_pipeline(cfg, a / "run", opts);
    pl::run_pipeline(cfg, b / "run", opts);
    for (auto l : cfg.languages) {
        const auto ea = pl::export_run(cfg, a / "run", l, a / "out");
        const auto eb = pl::export_run(cfg, b / "run", l, b / "out");
        const std::string code(language_code(l));
        if (io::read_file(a / "out" / (code + ".negatives.tsv")) != io::read_file(b / "out" / (code + ".negatives.tsv")))
            out.fail("negatives differ between identical runs in " + code);
        if (io::read_file(pl::RunLayout{a / "run"}.negatives(l)) != io::read_file(golden() / ("negatives." + code + ".jsonl")))
            out.fail("negative draws differ from golden in " + code);
        if (ea.negatives == 0 || ea.negatives != eb.negatives) out.fail("negative count unstable in " + code);
    }
    if (out.pass) out.detail << "59 of 100 with warning; 100 of 120 by timestamp then pair_id; negatives seed-stable";
}

// --- 9. review service --------------------------------------------------

void review_service(Outcome& out) {
    auto records = pl::load_records(golden() / "records.jsonl");
    gt::TempDir dir("accept-review");
    const auto log_path = dir / "decisions.jsonl";

    std::vector<std::pair<std::string, std::string>> targets; // (pair_id, lang) at risk
    for (const auto& r : records)
        for (const auto& [l, v] : r.languages)
            if (v.label.value == Risk::AtRisk) targets.emplace_back(r.pair_id, std::string(language_code(l)));
    if (targets.empty()) {
        out.fail("golden run has no at-risk pairs");
        return;
    }

    json before;
    {
        review::ReviewStore store(records, log_path);
        review::ReviewServer server(store);
        const int port = server.start("127.0.0.1", 0);
        const std::array<const char*, 3> verdicts{"ACCEPTED", "REJECTED_FIXED_GENDER", "REJECTED_OTHER"};
        std::atomic<std::size_t> ok{0};
        std::vector<std::thread> workers;
        const std::size_t per_worker = kConcurrentDecisions / 8;
        for (int w = 0; w < 8; ++w)
            workers.emplace_back([&, w] {
                httplib::Client client("127.0.0.1", port);
                std::mt19937_64 rng(1000 + w);
                for (std::size_t k = 0; k < per_worker; ++k) {
                    const auto& [pid, lang] = targets[rng() % targets.size()];
                    const json body{{"pair_id", pid}, {"lang", lang}, {"verdict", verdicts[rng() % 3]},
                                    {"annotator_id", "a" + std::to_string(w)}};
                    const auto res = client.Post("/api/decision", body.dump(), "application/json");
                    if (res && res->status == 200) ++ok;
                }
            });
        for (auto& t : workers) t.join();
        if (ok != kConcurrentDecisions) out.fail(std::to_string(ok.load()) + " of 1000 decisions accepted");

        httplib::Client client("127.0.0.1", port);
        before = json::object();
        for (auto l : store.languages()) {
            const auto res = client.Get("/api/progress?lang=" + std::string(language_code(l)));
            if (!res || res->status != 200) {
                out.fail("progress request failed");
                continue;
            }
            auto p = json::parse(res->body);
            const auto sum = p["accepted"].get<std::size_t>() + p["rejected_fixed"].get<std::size_t>() +
                             p["rejected_other"].get<std::size_t>() + p["pending"].get<std::size_t>();
            std::size_t total = 0;
            for (const auto& [pid, lang] : targets) total += lang == language_code(l);
            if (sum != p["at_risk_total"].get<std::size_t>() || sum != total)
                out.fail("conservation broken in " + std::string(language_code(l)));
            before[std::string(language_code(l))] = p;
        }
        server.stop();
    }

    review::ReviewStore reopened(records, log_path);
    for (auto& [code, p] : before.items())
        if (reopened.progress(parse_language(code)).to_json() != p) out.fail("state after restart differs in " + code);
    if (reopened.replayed() != kConcurrentDecisions) out.fail("replayed " + std::to_string(reopened.replayed()));
    if (out.pass) out.detail << "1000 concurrent HTTP decisions conserved; replay restores all " << before.size() << " languages";
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {"fixture end-to-end determinism", fixture_determinism},
        {"perturbation caps", perturbation_caps},
        {"filter correctness", filter_gold},
        {"EM aligner", em_aligner},
        {"gender tagger gold set", gender_tagger},
        {"divergence classification", divergence},
        {"ratio oracle", ratio_oracle},
        {"quota/export", quota_export},
        {"review service", review_service},
    };
    int failed = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            check(o);
        } catch (const std::exception& e) {
            o.fail(std::string("exception: ") + e.what());
        }
        std::printf("%s  %s: %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.str().c_str());
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed;
}
