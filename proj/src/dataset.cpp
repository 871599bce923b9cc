#include "gendermine/dataset.hpp"

#include "gendermine/error.hpp"
#include "gendermine/io.hpp"
#include "gendermine/text.hpp"

#include <algorithm>
#include <array>
#include <tuple>

namespace gendermine {

using nlohmann::json;

namespace {

constexpr std::array<std::string_view, 4> kStateNames{"PENDING", "ACCEPTED", "REJECTED_FIXED_GENDER",
                                                      "REJECTED_OTHER"};

json side_json(const TranslationOutcome& o, const std::string& text) {
    json j{{"text", text}, {"tokens", o.translation_tokens}, {"target_index", nullptr}, {"posterior", nullptr},
           {"gender", nullptr}, {"evidence", nullptr}};
    if (o.projection.target_index) j["target_index"] = *o.projection.target_index;
    if (o.projection.posterior) j["posterior"] = *o.projection.posterior;
    if (o.gender) {
        j["gender"] = gender_name(o.gender->value);
        j["evidence"] = evidence_name(o.gender->evidence);
    }
    return j;
}

TranslationOutcome side_from_json(const json& j, const std::string& pair_id, Side side, Language lang,
                                  std::string* text) {
    TranslationOutcome o{pair_id, side, lang, j.at("tokens").get<std::vector<std::string>>(), {}, std::nullopt};
    if (!j.at("target_index").is_null()) o.projection.target_index = j.at("target_index").get<std::size_t>();
    if (!j.at("posterior").is_null()) o.projection.posterior = j.at("posterior").get<double>();
    if (!j.at("gender").is_null())
        o.gender = GenderTag{parse_gender(j.at("gender").get<std::string>()),
                             parse_evidence(j.at("evidence").get<std::string>())};
    *text = j.at("text").get<std::string>();
    return o;
}

std::string tsv_gender(const TranslationOutcome& o) {
    return o.gender ? std::string(gender_letter(o.gender->value)) : std::string("?");
}

std::string tsv_field(std::string s) {
    for (auto& c : s)
        if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    return s;
}

std::string tsv_rows(const std::vector<const ExampleRecord*>& rows, Language l) {
    std::string out = "pair_id\tsource_original\tsource_substituted\ttranslation_original\ttranslation_substituted\t"
                      "gender_original\tgender_substituted\tlabel\n";
    for (const auto* r : rows) {
        const auto& v = *r->view(l);
        out += r->pair_id + "\t" + tsv_field(text::detokenize(r->source_original)) + "\t" +
               tsv_field(text::detokenize(r->source_substituted)) + "\t" + tsv_field(v.original_text) + "\t" +
               tsv_field(v.substituted_text) + "\t" + tsv_gender(v.original) + "\t" + tsv_gender(v.substituted) + "\t" +
               std::string(risk_name(v.label.value)) + "\n";
    }
    return out;
}

} // namespace

std::string_view annotation_state_name(AnnotationState s) { return kStateNames[static_cast<std::size_t>(s)]; }

AnnotationState parse_annotation_state(std::string_view s) {
    for (std::size_t i = 0; i < kStateNames.size(); ++i)
        if (kStateNames[i] == s) return static_cast<AnnotationState>(i);
    throw std::invalid_argument("unknown annotation state: " + std::string(s));
}

const LanguageView* ExampleRecord::view(Language l) const {
    auto it = languages.find(l);
    return it == languages.end() ? nullptr : &it->second;
}

json to_json(const ExampleRecord& r) {
    json langs = json::object();
    for (const auto& [l, v] : r.languages) {
        langs[std::string(language_code(l))] = {
            {"label", risk_name(v.label.value)},
            {"reason", v.label.reason},
            {"annotation", annotation_state_name(v.annotation)},
            {"accepted_at_ms", v.accepted_at_ms ? json(*v.accepted_at_ms) : json(nullptr)},
            {"negative_draw", v.negative_draw ? json(*v.negative_draw) : json(nullptr)},
            {"original", side_json(v.original, v.original_text)},
            {"substituted", side_json(v.substituted, v.substituted_text)},
        };
    }
    return {{"pair_id", r.pair_id},
            {"sentence_id", r.sentence_id},
            {"focus_index", r.focus_index},
            {"original", r.original_surface},
            {"substitute", r.substitute_surface},
            {"candidate_rank", r.candidate_rank},
            {"mlm_score", r.mlm_score},
            {"source_original", r.source_original},
            {"source_substituted", r.source_substituted},
            {"languages", langs}};
}

ExampleRecord record_from_json(const json& j) {
    ExampleRecord r;
    r.pair_id = j.at("pair_id").get<std::string>();
    r.sentence_id = j.at("sentence_id").get<std::string>();
    r.focus_index = j.at("focus_index").get<std::size_t>();
    r.original_surface = j.at("original").get<std::string>();
    r.substitute_surface = j.at("substitute").get<std::string>();
    r.candidate_rank = j.at("candidate_rank").get<int>();
    r.mlm_score = j.at("mlm_score").get<double>();
    r.source_original = j.at("source_original").get<std::vector<std::string>>();
    r.source_substituted = j.at("source_substituted").get<std::vector<std::string>>();
    for (const auto& [code, v] : j.at("languages").items()) {
        const auto l = parse_language(code);
        LanguageView view;
        view.original = side_from_json(v.at("original"), r.pair_id, Side::Original, l, &view.original_text);
        view.substituted = side_from_json(v.at("substituted"), r.pair_id, Side::Substituted, l, &view.substituted_text);
        view.label = {parse_risk(v.at("label").get<std::string>()), v.at("reason").get<std::string>()};
        view.annotation = parse_annotation_state(v.at("annotation").get<std::string>());
        if (!v.at("accepted_at_ms").is_null()) view.accepted_at_ms = v.at("accepted_at_ms").get<std::int64_t>();
        if (!v.at("negative_draw").is_null()) view.negative_draw = v.at("negative_draw").get<std::size_t>();
        r.languages.emplace(l, std::move(view));
    }
    return r;
}

json to_json(const OutcomeRow& r) {
    return {{"pair_id", r.pair_id},
            {"side", side_name(r.side)},
            {"language", language_code(r.language)},
            {"focus_surface", r.focus_surface},
            {"target_token", r.target_token ? json(*r.target_token) : json(nullptr)},
            {"gender", gender_name(r.gender)},
            {"label", risk_name(r.label)}};
}

OutcomeRow outcome_from_json(const json& j) {
    OutcomeRow r;
    r.pair_id = j.at("pair_id").get<std::string>();
    r.side = parse_side(j.at("side").get<std::string>());
    r.language = parse_language(j.at("language").get<std::string>());
    r.focus_surface = j.at("focus_surface").get<std::string>();
    if (!j.at("target_token").is_null()) r.target_token = j.at("target_token").get<std::string>();
    r.gender = parse_gender(j.at("gender").get<std::string>());
    r.label = parse_risk(j.at("label").get<std::string>());
    return r;
}

json to_json(const FormRatio& r) {
    return {{"form", r.form},
            {"language", language_code(r.language)},
            {"masculine", r.masculine},
            {"feminine", r.feminine},
            {"ratio", r.ratio_display()}};
}

std::vector<FormRatio> compute_ratios(std::span<const OutcomeRow> outcomes, RatioGroup group) {
    const auto wanted = group == RatioGroup::Positive ? Risk::AtRisk : Risk::NotAtRisk;
    std::map<std::pair<std::string, Language>, FormRatio> by_form;
    for (const auto& row : outcomes) {
        if (row.label != wanted) continue;
        auto [it, _] = by_form.try_emplace({row.focus_surface, row.language}, FormRatio{row.focus_surface, row.language});
        if (row.gender == Gender::Masculine) ++it->second.masculine;
        if (row.gender == Gender::Feminine) ++it->second.feminine;
    }
    std::vector<FormRatio> out;
    out.reserve(by_form.size());
    for (auto& [_, r] : by_form) out.push_back(std::move(r));
    std::stable_sort(out.begin(), out.end(), [](const FormRatio& a, const FormRatio& b) {
        return a.masculine + a.feminine > b.masculine + b.feminine;
    });
    return out;
}

ExportSelection select_for_export(std::span<const ExampleRecord> records, Language language, const Quotas& quotas) {
    ExportSelection sel;
    std::vector<const ExampleRecord*> accepted, sampled;
    for (const auto& r : records) {
        const auto* v = r.view(language);
        if (!v) continue;
        if (v->annotation == AnnotationState::Accepted) accepted.push_back(&r);
        if (v->negative_draw) sampled.push_back(&r);
    }
    std::sort(accepted.begin(), accepted.end(), [&](const ExampleRecord* a, const ExampleRecord* b) {
        const auto ta = a->view(language)->accepted_at_ms.value_or(0);
        const auto tb = b->view(language)->accepted_at_ms.value_or(0);
        return std::tie(ta, a->pair_id) < std::tie(tb, b->pair_id);
    });
    std::sort(sampled.begin(), sampled.end(), [&](const ExampleRecord* a, const ExampleRecord* b) {
        return *a->view(language)->negative_draw < *b->view(language)->negative_draw;
    });
    const auto code = std::string(language_code(language));
    if (accepted.size() < quotas.positives)
        sel.warnings.push_back(code + ": positive quota shortfall, " + std::to_string(accepted.size()) + " of " +
                               std::to_string(quotas.positives) + " accepted");
    if (sampled.size() < quotas.negatives)
        sel.warnings.push_back(code + ": negative quota shortfall, " + std::to_string(sampled.size()) + " of " +
                               std::to_string(quotas.negatives) + " sampled");
    accepted.resize(std::min(accepted.size(), quotas.positives));
    sampled.resize(std::min(sampled.size(), quotas.negatives));
    auto by_id = [](const ExampleRecord* a, const ExampleRecord* b) { return a->pair_id < b->pair_id; };
    std::sort(accepted.begin(), accepted.end(), by_id);
    std::sort(sampled.begin(), sampled.end(), by_id);
    sel.positives = std::move(accepted);
    sel.negatives = std::move(sampled);
    return sel;
}

json ExportResult::to_json() const {
    json fs_list = json::array();
    for (const auto& f : files) fs_list.push_back(f.filename().string());
    return {{"language", language_code(language)},
            {"positives", positives},
            {"negatives", negatives},
            {"warnings", warnings},
            {"files", fs_list}};
}

ExportResult export_dataset(std::span<const ExampleRecord> records, Language language, const Quotas& quotas,
                            const std::filesystem::path& out_dir) {
    auto sel = select_for_export(records, language, quotas);
    const auto code = std::string(language_code(language));
    ExportResult result{language, sel.positives.size(), sel.negatives.size(), sel.warnings, {}};

    std::vector<json> rows;
    for (const auto* r : sel.positives) rows.push_back({{"split", "positive"}, {"record", to_json(*r)}});
    for (const auto* r : sel.negatives) rows.push_back({{"split", "negative"}, {"record", to_json(*r)}});

    const auto pos = out_dir / (code + ".positives.tsv");
    const auto neg = out_dir / (code + ".negatives.tsv");
    const auto jl = out_dir / (code + ".jsonl");
    io::write_file_atomic(pos, tsv_rows(sel.positives, language));
    io::write_file_atomic(neg, tsv_rows(sel.negatives, language));
    io::write_jsonl(jl, rows);
    result.files = {pos, neg, jl, out_dir / (code + ".report.json")};
    io::write_json(result.files.back(), result.to_json());
    return result;
}

} // namespace gendermine
