#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "gendermine/filter.hpp"
#include "gendermine/gateway.hpp"

namespace gendermine {

// What a subword candidate ("##ing") costs during the scan.
enum class SubwordPolicy { ConsumesScan, Free };
std::string_view subword_policy_name(SubwordPolicy p);
SubwordPolicy parse_subword_policy(std::string_view name);

struct PerturbConfig {
    std::size_t scan_cap = 100;
    std::size_t accept_cap = 10;
    SubwordPolicy subword = SubwordPolicy::ConsumesScan;
};

// A minimal pair: the base sentence and a copy differing only at focus_index.
struct PerturbedPair {
    std::string pair_id;
    SourceSentence base;
    std::string substitute_surface;
    std::vector<Token> substituted_tokens;
    int candidate_rank = 0;
    double mlm_score = 0.0;
};

// Per-sentence accounting of the candidate scan.
struct PerturbTrace {
    std::size_t candidates_returned = 0;
    std::size_t scanned = 0;
    std::size_t accepted = 0;
    std::size_t subword = 0;
    std::size_t same_as_original = 0;
    std::size_t duplicate = 0;
    std::size_t focus_moved = 0;
    std::array<std::size_t, kRejectReasonCount> rejected{};

    nlohmann::json to_json() const;
};

struct PerturbResult {
    std::vector<PerturbedPair> pairs;
    PerturbTrace trace;
};

bool is_subword_piece(std::string_view candidate);

std::string make_pair_id(const std::string& sentence_id, std::size_t focus_index, const std::string& substitute);

// Masks the focus, asks for scan_cap candidates and walks them in rank order,
// keeping up to accept_cap substitutes whose sentence passes the source
// filter with the person entity still at focus_index. Backend failures
// propagate as BackendError.
PerturbResult perturb(const SourceSentence& source, Gateway& gateway, const FilterLexicons& lexicons,
                      const PerturbConfig& config = {});

nlohmann::json to_json(const PerturbedPair& pair);
// Needs the base sentence's tokens, which pair rows carry alongside the
// pair fields.
PerturbedPair pair_from_json(const nlohmann::json& j);

} // namespace gendermine
