// gendermine: command-line driver for the mining pipeline and review service.

#include <CLI11.hpp>

#include "gendermine/dataset.hpp"
#include "gendermine/error.hpp"
#include "gendermine/io.hpp"
#include "gendermine/pipeline.hpp"
#include "gendermine/review.hpp"

#include <csignal>
#include <cstdio>
#include <iostream>

namespace fs = std::filesystem;
using namespace gendermine;
using namespace gendermine::pipeline;
using nlohmann::json;

namespace {

struct Globals {
    std::string run_dir = "run";
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

RunConfig load(const Globals& g) {
    RunConfig cfg = g.config.empty() ? RunConfig{} : load_config(g.config);
    if (g.seed) cfg.seed = *g.seed;
    if (g.threads) cfg.threads = *g.threads;
    return cfg;
}

std::vector<Language> languages_for(const RunConfig& cfg, const std::string& lang) {
    if (lang.empty()) return cfg.languages;
    return {parse_language(lang)};
}

fs::path or_default(const std::string& given, const fs::path& fallback) { return given.empty() ? fallback : fs::path(given); }

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

void log_line(std::string_view msg) { std::cerr << "gendermine: " << msg << "\n"; }

review::ReviewServer* g_server = nullptr;

extern "C" void on_signal(int) {
    if (g_server) g_server->stop();
}

void print_ratio_table(const json& stats, std::size_t top) {
    for (auto& [code, groups] : stats.at("languages").items()) {
        std::printf("%s\n", code.c_str());
        for (const auto* group : {"positive", "negative"}) {
            const auto& rows = groups.at(group);
            std::printf("  %s\n", group);
            for (std::size_t k = 0; k < rows.size() && k < top; ++k)
                std::printf("    %-20s %s\n", rows[k].at("form").get<std::string>().c_str(),
                            rows[k].at("ratio").get<std::string>().c_str());
        }
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mine gender-divergent minimal pairs from machine translation output."};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--run-dir", g.run_dir, "Run directory holding stage artifacts")->capture_default_str();
    app.add_option("--config", g.config, "key = value configuration file");
    app.add_option("--seed", g.seed, "Override the sampling seed");
    app.add_option("--threads", g.threads, "Worker threads (0 = hardware concurrency)");

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "Segment, tokenize and deduplicate a corpus");
    std::string ingest_in, ingest_format, ingest_out;
    std::optional<std::size_t> ingest_max_len;
    ingest_cmd->add_option("--input", ingest_in, "Corpus file (defaults to the configured corpus)");
    ingest_cmd->add_option("--format", ingest_format, "txt or jsonl")->check(CLI::IsMember({"txt", "jsonl"}));
    ingest_cmd->add_option("--out", ingest_out, "Output sentences (JSON-lines)");
    ingest_cmd->add_option("--max-len", ingest_max_len, "Maximum tokens per sentence");

    // filter
    auto* filter_cmd = app.add_subcommand("filter", "Keep sentences with a single person-noun focus");
    std::string filter_in, filter_out, filter_rejects;
    filter_cmd->add_option("--in", filter_in, "Sentences (JSON-lines)");
    filter_cmd->add_option("--out", filter_out, "Accepted sentences");
    filter_cmd->add_option("--rejects", filter_rejects, "Rejection log");

    // perturb
    auto* perturb_cmd = app.add_subcommand("perturb", "Generate minimal pairs with the masked LM");
    std::string perturb_in, perturb_out, perturb_trace;
    std::optional<std::size_t> scan_cap, accept_cap;
    perturb_cmd->add_option("--in", perturb_in, "Accepted sentences");
    perturb_cmd->add_option("--out", perturb_out, "Pairs (JSON-lines)");
    perturb_cmd->add_option("--trace", perturb_trace, "Per-sentence scan accounting");
    perturb_cmd->add_option("--scan-cap", scan_cap, "Candidates scanned per sentence");
    perturb_cmd->add_option("--accept-cap", accept_cap, "Substitutes accepted per sentence");

    // translate
    auto* translate_cmd = app.add_subcommand("translate", "Translate both sides of every pair");
    std::string translate_lang, translate_in, translate_out;
    translate_cmd->add_option("--lang", translate_lang, "Target language (default: all configured)");
    translate_cmd->add_option("--in", translate_in, "Pairs");
    translate_cmd->add_option("--out", translate_out, "Translations (single language only)");

    // align
    auto* align_cmd = app.add_subcommand("align", "Train or apply the word aligner");
    align_cmd->require_subcommand(1);
    std::string align_lang, align_in, align_model, align_out;
    std::optional<int> align_iters;
    std::optional<double> align_lambda, align_p0;
    for (auto* sub : {align_cmd->add_subcommand("train", "EM-train the aligner on translations"),
                      align_cmd->add_subcommand("decode", "Viterbi-align and project the focus")}) {
        sub->add_option("--lang", align_lang, "Target language (default: all configured)");
        sub->add_option("--in", align_in, "Translations");
        sub->add_option("--model", align_model, "Model file");
        sub->add_option("--iters", align_iters, "EM iterations");
        sub->add_option("--lambda", align_lambda, "Diagonal tension");
        sub->add_option("--p0", align_p0, "NULL link probability");
        if (sub->get_name() == "decode") sub->add_option("--out", align_out, "Alignments");
    }

    // tag-gender
    auto* tag_cmd = app.add_subcommand("tag-gender", "Tag grammatical gender of projected foci");
    std::string tag_lang, tag_in, tag_out;
    tag_cmd->add_option("--lang", tag_lang, "Target language (default: all configured)");
    tag_cmd->add_option("--in", tag_in, "Alignments");
    tag_cmd->add_option("--out", tag_out, "Tagged rows");

    // detect
    auto* detect_cmd = app.add_subcommand("detect", "Label pairs AT_RISK / NOT_AT_RISK / INDETERMINATE");
    std::string detect_lang, detect_in, detect_out, detect_outcomes;
    detect_cmd->add_option("--lang", detect_lang, "Target language (default: all configured)");
    detect_cmd->add_option("--in", detect_in, "Tagged rows");
    detect_cmd->add_option("--out", detect_out, "Risk labels");
    detect_cmd->add_option("--outcomes", detect_outcomes, "Outcome rows for statistics");

    // sample-negatives
    auto* sample_cmd = app.add_subcommand("sample-negatives", "Draw seeded NOT_AT_RISK negatives");
    std::string sample_lang, sample_in, sample_out;
    std::optional<std::size_t> sample_n;
    sample_cmd->add_option("--lang", sample_lang, "Target language (default: all configured)");
    sample_cmd->add_option("--n", sample_n, "Negatives per language");
    sample_cmd->add_option("--in", sample_in, "Risk labels");
    sample_cmd->add_option("--out", sample_out, "Negative draws");

    // stats
    auto* stats_cmd = app.add_subcommand("stats", "Per-form M:F ratios for at-risk and negative pairs");
    std::string stats_out;
    std::size_t stats_top = 5;
    stats_cmd->add_option("--out", stats_out, "Output JSON");
    stats_cmd->add_option("--top", stats_top, "Rows per group in the printed table")->capture_default_str();

    // export
    auto* export_cmd = app.add_subcommand("export", "Write the released dataset files");
    std::string export_lang, export_out;
    export_cmd->add_option("--lang", export_lang, "Target language (default: all configured)");
    export_cmd->add_option("--out", export_out, "Output directory");

    // serve
    auto* serve_cmd = app.add_subcommand("serve", "Serve the review API and UI");
    std::string serve_host = "127.0.0.1", serve_ui;
    int serve_port = 8080;
    serve_cmd->add_option("--port", serve_port, "Port")->capture_default_str();
    serve_cmd->add_option("--host", serve_host, "Bind address")->capture_default_str();
    serve_cmd->add_option("--ui-dir", serve_ui, "Directory of built review-ui assets");

    // run
    auto* run_cmd = app.add_subcommand("run", "Run every stage end to end");
    std::string run_manifest, run_base;
    bool no_resume = false;
    run_cmd->add_option("--manifest", run_manifest, "Re-run with the configuration recorded in a manifest");
    run_cmd->add_option("--base-dir", run_base, "Directory that relative manifest paths resolve against");
    run_cmd->add_flag("--no-resume", no_resume, "Re-run stages even when their markers are current");

    CLI11_PARSE(app, argc, argv);

    try {
        auto cfg = load(g);
        const RunLayout L{g.run_dir};

        if (*run_cmd) {
            if (!run_manifest.empty()) {
                const auto m = io::read_json(run_manifest);
                cfg = config_from_json(m.at("config"), run_base.empty() ? fs::path(".") : fs::path(run_base));
                if (g.seed) cfg.seed = *g.seed;
                if (g.threads) cfg.threads = *g.threads;
            }
            RunOptions opts;
            opts.resume = !no_resume;
            opts.log = log_line;
            print(run_pipeline(cfg, g.run_dir, opts)["counts"]);
            return 0;
        }

        if (*serve_cmd) {
            review::ReviewOptions ro;
            ro.quota = cfg.positives_quota;
            ro.effective_annotator = cfg.effective_annotator;
            if (!fs::exists(L.records())) throw ConfigError("no records.jsonl in " + g.run_dir + "; run the pipeline first");
            review::ReviewStore store(load_records(L.records()), L.decisions(), ro);
            const Quotas quotas{cfg.positives_quota, cfg.negatives};
            review::Exporter exporter = [&](Language l) {
                const auto records = store.annotated_records();
                return export_dataset(records, l, quotas, L.export_dir()).to_json();
            };
            std::optional<fs::path> ui;
            if (!serve_ui.empty()) ui = serve_ui;
            review::ReviewServer server(store, exporter, ui);
            g_server = &server;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            log_line("replayed " + std::to_string(store.replayed()) + " decisions; listening on " + serve_host + ":" +
                     std::to_string(serve_port));
            if (!server.listen(serve_host, serve_port)) throw ConfigError("cannot listen on port " + std::to_string(serve_port));
            return 0;
        }

        RunLock lock(g.run_dir);
        fs::create_directories(g.run_dir);

        if (*ingest_cmd) {
            if (ingest_max_len) cfg.max_len = *ingest_max_len;
            if (!ingest_format.empty()) cfg.corpus_format = parse_corpus_format(ingest_format);
            Resources res(cfg);
            const auto input = ingest_in.empty() ? cfg.resolve(cfg.corpus) : fs::path(ingest_in);
            print(stage_ingest(cfg, res, input, cfg.corpus_format, or_default(ingest_out, L.sentences())));
        } else if (*filter_cmd) {
            Resources res(cfg, L.cache());
            print(stage_filter(cfg, res, or_default(filter_in, L.sentences()), or_default(filter_out, L.accepted()),
                               or_default(filter_rejects, L.rejects())));
        } else if (*perturb_cmd) {
            if (scan_cap) cfg.set("scan_cap", std::to_string(*scan_cap));
            if (accept_cap) cfg.set("accept_cap", std::to_string(*accept_cap));
            Resources res(cfg, L.cache());
            print(stage_perturb(cfg, res, or_default(perturb_in, L.accepted()), or_default(perturb_out, L.pairs()),
                                or_default(perturb_trace, L.perturb_trace())));
        } else if (*translate_cmd) {
            Resources res(cfg, L.cache());
            const auto langs = languages_for(cfg, translate_lang);
            if (!translate_out.empty() && langs.size() != 1) throw ConfigError("--out needs --lang");
            for (auto l : langs)
                print(stage_translate(cfg, res, l, or_default(translate_in, L.pairs()),
                                      or_default(translate_out, L.translations(l))));
        } else if (*align_cmd) {
            if (align_iters) cfg.set("iterations", std::to_string(*align_iters));
            if (align_lambda) cfg.alignment.tension = *align_lambda;
            if (align_p0) cfg.alignment.null_prob = *align_p0;
            const auto langs = languages_for(cfg, align_lang);
            if ((!align_in.empty() || !align_model.empty() || !align_out.empty()) && langs.size() != 1)
                throw ConfigError("explicit paths need --lang");
            const bool train = align_cmd->got_subcommand("train");
            for (auto l : langs) {
                const auto in = or_default(align_in, L.translations(l));
                const auto model = or_default(align_model, L.model(l));
                if (train) print(stage_align_train(cfg, l, in, model));
                else print(stage_align_decode(cfg, l, model, in, or_default(align_out, L.alignments(l))));
            }
        } else if (*tag_cmd) {
            Resources res(cfg);
            const auto langs = languages_for(cfg, tag_lang);
            if ((!tag_in.empty() || !tag_out.empty()) && langs.size() != 1) throw ConfigError("explicit paths need --lang");
            for (auto l : langs)
                print(stage_tag(cfg, res, l, or_default(tag_in, L.alignments(l)), or_default(tag_out, L.tagged(l))));
        } else if (*detect_cmd) {
            const auto langs = languages_for(cfg, detect_lang);
            if ((!detect_in.empty() || !detect_out.empty() || !detect_outcomes.empty()) && langs.size() != 1)
                throw ConfigError("explicit paths need --lang");
            for (auto l : langs)
                print(stage_detect(l, or_default(detect_in, L.tagged(l)), or_default(detect_out, L.detect(l)),
                                   or_default(detect_outcomes, L.outcomes(l))));
        } else if (*sample_cmd) {
            if (sample_n) cfg.negatives = *sample_n;
            const auto langs = languages_for(cfg, sample_lang);
            if ((!sample_in.empty() || !sample_out.empty()) && langs.size() != 1)
                throw ConfigError("explicit paths need --lang");
            for (auto l : langs)
                print(stage_sample(cfg, l, or_default(sample_in, L.detect(l)), or_default(sample_out, L.negatives(l))));
        } else if (*stats_cmd) {
            const auto out = or_default(stats_out, L.stats());
            stage_stats(cfg.languages, L, out);
            print_ratio_table(io::read_json(out), stats_top);
        } else if (*export_cmd) {
            for (auto l : languages_for(cfg, export_lang)) {
                const auto result = export_run(cfg, g.run_dir, l, or_default(export_out, L.export_dir()));
                for (const auto& w : result.warnings) log_line(std::string(language_code(l)) + ": " + w);
                print(result.to_json());
            }
        }
        return 0;
    } catch (const ConfigError& e) {
        std::cerr << "gendermine: configuration error: " << e.what() << "\n";
        return 2;
    } catch (const StageError& e) {
        std::cerr << "gendermine: stage " << e.stage() << " failed: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "gendermine: " << e.what() << "\n";
        return 1;
    }
}
