#include "gendermine/perturb.hpp"

#include "gendermine/error.hpp"
#include "gendermine/text.hpp"

#include <set>

namespace gendermine {

using nlohmann::json;

std::string_view subword_policy_name(SubwordPolicy p) {
    return p == SubwordPolicy::ConsumesScan ? "consumes_scan" : "free";
}

SubwordPolicy parse_subword_policy(std::string_view name) {
    if (name == "consumes_scan") return SubwordPolicy::ConsumesScan;
    if (name == "free") return SubwordPolicy::Free;
    throw ConfigError("unknown subword policy: " + std::string(name));
}

json PerturbTrace::to_json() const {
    json rej = json::object();
    for (std::size_t i = 0; i < kRejectReasonCount; ++i)
        rej[std::string(reject_reason_name(static_cast<RejectReason>(i)))] = rejected[i];
    return {{"candidates_returned", candidates_returned},
            {"scanned", scanned},
            {"accepted", accepted},
            {"subword", subword},
            {"same_as_original", same_as_original},
            {"duplicate", duplicate},
            {"focus_moved", focus_moved},
            {"rejected", rej}};
}

bool is_subword_piece(std::string_view candidate) { return candidate.empty() || candidate.starts_with("##"); }

std::string make_pair_id(const std::string& sentence_id, std::size_t focus_index, const std::string& substitute) {
    return text::short_digest(sentence_id + "\t" + std::to_string(focus_index) + "\t" + substitute);
}

PerturbResult perturb(const SourceSentence& source, Gateway& gateway, const FilterLexicons& lexicons,
                      const PerturbConfig& config) {
    if (config.scan_cap < 1 || config.accept_cap < 1) throw PreconditionError("perturb: caps must be at least 1");
    const auto& base = source.sentence;
    if (source.focus_index >= base.tokens.size()) throw PreconditionError("perturb: focus outside sentence");

    PerturbResult result;
    auto& trace = result.trace;
    const auto candidates = gateway.fill_mask(base.tokens, source.focus_index, config.scan_cap);
    trace.candidates_returned = candidates.size();
    const auto original = text::to_lower(source.focus_surface);
    std::set<std::string> taken;

    for (const auto& cand : candidates) {
        if (trace.scanned >= config.scan_cap || trace.accepted >= config.accept_cap) break;
        const bool subword = is_subword_piece(cand.token);
        if (!subword || config.subword == SubwordPolicy::ConsumesScan) ++trace.scanned;
        if (subword) {
            ++trace.subword;
            continue;
        }
        auto lower = text::to_lower(cand.token);
        if (lower == original) {
            ++trace.same_as_original;
            continue;
        }
        if (taken.contains(lower)) {
            ++trace.duplicate;
            continue;
        }

        // Backends see the lowercase sentence that will be emitted; the filter
        // sees the candidate's own casing so a capitalized name is still caught.
        auto emitted = base.tokens;
        emitted[source.focus_index].surface = lower;
        auto as_filtered = base;
        as_filtered.tokens[source.focus_index].surface = cand.token;
        const auto ner = gateway.ner_tag(emitted);
        const auto pos = gateway.pos_tag(emitted);
        const auto outcome = filter_sentence(as_filtered, ner, pos, lexicons);
        if (const auto* rej = std::get_if<Rejection>(&outcome)) {
            ++trace.rejected[static_cast<std::size_t>(rej->reason)];
            continue;
        }
        if (std::get<SourceSentence>(outcome).focus_index != source.focus_index) {
            ++trace.focus_moved;
            continue;
        }
        taken.insert(lower);
        ++trace.accepted;
        result.pairs.push_back({make_pair_id(base.sentence_id, source.focus_index, lower), source, lower,
                                std::move(emitted), cand.rank, cand.score});
    }
    return result;
}

json to_json(const PerturbedPair& pair) {
    return {{"pair_id", pair.pair_id},
            {"sentence_id", pair.base.sentence.sentence_id},
            {"focus_index", pair.base.focus_index},
            {"original", pair.base.focus_surface},
            {"substitute", pair.substitute_surface},
            {"candidate_rank", pair.candidate_rank},
            {"mlm_score", pair.mlm_score},
            {"doc_id", pair.base.sentence.doc_id},
            {"tokens", pair.base.sentence.surfaces()}};
}

PerturbedPair pair_from_json(const json& j) {
    SourceSentence base;
    base.sentence = sentence_from_json(j);
    base.focus_index = j.at("focus_index").get<std::size_t>();
    base.focus_surface = j.at("original").get<std::string>();
    if (base.focus_index >= base.sentence.tokens.size())
        throw std::runtime_error("pair focus outside sentence: " + j.value("pair_id", std::string()));
    PerturbedPair p;
    p.pair_id = j.at("pair_id").get<std::string>();
    p.substitute_surface = j.at("substitute").get<std::string>();
    p.substituted_tokens = base.sentence.tokens;
    p.substituted_tokens[base.focus_index].surface = p.substitute_surface;
    p.candidate_rank = j.at("candidate_rank").get<int>();
    p.mlm_score = j.at("mlm_score").get<double>();
    p.base = std::move(base);
    return p;
}

} // namespace gendermine
