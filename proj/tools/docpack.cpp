// docpack: ingest -> build-qa -> pack -> stats/bench.
//
// Every option can also come from a TOML config file (--config); command-line
// flags win over file values. DOCPACK_LOG_LEVEL sets log verbosity.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "docpack/pipeline.hpp"

namespace {

using namespace docpack;

struct Options {
    PipelineConfig cfg;
    std::string policy = "first_fit";
    std::string tokenizer = "reference";
    std::string tokenizer_command;
    std::string tokenizer_vocab;
    std::string tasks;
    std::string context_format = "interleaved";
    std::string templates;

    bool strict = false;
    std::string external_qa;
    std::string translations;
    std::string report;
    std::string debug_jsonl;
    std::vector<std::string> packed;
    std::string format = "table";

    std::string distribution = "lognormal";
    SynthSpec synth;
};

void setup_logging() {
    auto logger = spdlog::stderr_logger_mt("docpack");
    logger->set_pattern("[%l] %v");
    spdlog::set_default_logger(logger);
    if (const char* level = std::getenv("DOCPACK_LOG_LEVEL"))
        spdlog::set_level(spdlog::level::from_str(level));
    else
        spdlog::set_level(spdlog::level::info);
}

std::ifstream open_in(const std::string& path) {
    if (path.empty()) throw ConfigError("--input is required");
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    return in;
}

std::ofstream open_out(const std::string& path) {
    if (path.empty()) throw ConfigError("--output is required");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path);
    return out;
}

void finish_config(Options& o) {
    auto& cfg = o.cfg;
    if (o.policy == "first_fit")
        cfg.packer.policy = FindPolicy::first_fit;
    else if (o.policy == "front_only")
        cfg.packer.policy = FindPolicy::front_only;
    else
        throw ConfigError("unknown policy " + o.policy);

    if (o.tokenizer == "reference") {
        cfg.tokenizer.kind = TokenizerSpec::Kind::reference;
    } else if (o.tokenizer == "external") {
        cfg.tokenizer.kind = TokenizerSpec::Kind::external;
        if (!o.tokenizer_command.empty()) cfg.tokenizer.external_command = o.tokenizer_command;
        if (!o.tokenizer_vocab.empty()) cfg.tokenizer.external_vocab_uri = o.tokenizer_vocab;
    } else {
        throw ConfigError("unknown tokenizer " + o.tokenizer);
    }

    if (!o.tasks.empty()) {
        TaskSet set;
        std::stringstream ss(o.tasks);
        std::string name;
        while (std::getline(ss, name, ',')) {
            if (name.empty()) continue;
            auto t = parse_task(name);
            if (!t) throw ConfigError("unknown task " + name);
            set.insert(*t);
        }
        cfg.tasks = set;
    }
    auto sel = parse_context_selection(o.context_format);
    if (!sel) throw ConfigError("unknown context format " + o.context_format);
    cfg.context_format = *sel;
    if (!o.templates.empty()) cfg.templates = load_templates_file(o.templates);

    auto dist = parse_distribution(o.distribution);
    if (!dist) throw ConfigError("unknown distribution " + o.distribution);
    o.synth.distribution = *dist;
    o.synth.seed = cfg.seed;
    o.synth.text_atom_tokens = cfg.measure.text_atom_tokens;
    cfg.validate();
}

int cmd_ingest(const Options& o) {
    auto in = open_in(o.cfg.input_uri);
    auto result = ingest_corpus(in);
    for (const auto& e : result.errors) spdlog::error("line {}: {}", e.line, e.message);
    if (result.lines == 0) spdlog::warn("input {} contains no records", o.cfg.input_uri);
    auto out = open_out(o.cfg.output_uri);
    write_documents(out, result.documents);
    spdlog::info("ingested {} documents, {} failed", result.documents.size(), result.errors.size());
    return (o.strict && !result.errors.empty()) ? static_cast<int>(ErrorCategory::parse) : 0;
}

int cmd_build_qa(const Options& o) {
    auto in = open_in(o.cfg.input_uri);
    auto docs = ingest_corpus(in);
    if (!docs.errors.empty()) {
        for (const auto& e : docs.errors) spdlog::error("document store line {}: {}", e.line, e.message);
        return static_cast<int>(ErrorCategory::parse);
    }
    BuildQaInputs inputs;
    if (!o.external_qa.empty()) {
        auto f = open_in(o.external_qa);
        inputs.external_qa = read_external_qa(f);
    }
    if (!o.translations.empty()) {
        auto f = open_in(o.translations);
        inputs.translations = read_translations(f);
    }
    auto result = build_qa(docs.documents, o.cfg, inputs);
    for (const auto& s : result.skipped) spdlog::info("skip {}: {}", s.doc_id, s.reason);
    auto out = open_out(o.cfg.output_uri);
    write_conversations(out, result.conversations);
    for (const auto& [task, n] : result.per_task) std::cout << task << '\t' << n << '\n';
    std::cout << "total\t" << result.conversations.size() << '\n';
    return 0;
}

void write_json(const std::string& path, const nlohmann::json& j) {
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

int cmd_pack(const Options& o) {
    auto in = open_in(o.cfg.input_uri);
    const auto convs = read_conversations(in);
    const auto samples = measure_all(convs, o.cfg);
    const auto result = pack_samples(samples, o.cfg);
    for (const auto& p : write_pack_outputs(result, o.cfg, o.debug_jsonl)) spdlog::info("wrote {}", p);
    write_json(o.report.empty() ? o.cfg.output_uri + ".report.json" : o.report, to_json(result.report));
    std::cout << format_table(result.report);
    return 0;
}

int cmd_stats(const Options& o) {
    nlohmann::json j;
    if (!o.cfg.input_uri.empty()) {
        auto in = open_in(o.cfg.input_uri);
        const auto convs = read_conversations(in);
        const auto stats = sharded_corpus_stats(convs, measure_all(convs, o.cfg), o.cfg.shard_count);
        j["corpus"] = to_json(stats);
        if (o.format == "table") std::cout << format_table(stats);
    }
    if (!o.packed.empty()) {
        std::optional<PackingReportBuilder> builder;
        for (const auto& path : o.packed) {
            auto in = open_in(path);
            auto file = read_packed(in);
            PackerConfig cfg = o.cfg.packer;
            cfg.t_tok = file.header.t_tok;
            cfg.t_img = file.header.t_img;
            if (!builder) builder.emplace(cfg);
            for (const auto& p : file.records) builder->add(p);
        }
        const auto report = builder->report();
        j["packing"] = to_json(report);
        if (o.format == "table") std::cout << format_table(report);
    }
    if (j.is_null()) throw ConfigError("stats needs --input and/or --packed");
    if (o.format == "json") std::cout << j.dump(2) << '\n';
    if (!o.cfg.output_uri.empty()) write_json(o.cfg.output_uri, j);
    return 0;
}

int cmd_bench(const Options& o) {
    const auto r = run_bench(o.synth, o.cfg.packer);
    nlohmann::json j{{"packed", to_json(r.packed)},
                     {"naive", to_json(r.naive)},
                     {"waste_reduction_ratio", to_json(r.packed.waste_reduction_ratio())}};
    if (o.format == "json")
        std::cout << j.dump(2) << '\n';
    else
        std::cout << format_table(r.packed);
    if (!o.cfg.output_uri.empty()) write_json(o.cfg.output_uri, j);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    Options o;
    auto& cfg = o.cfg;

    CLI::App app{"Build document conversations and pack them into fixed-budget training sequences"};
    app.set_config("--config", "", "TOML config file");
    app.require_subcommand(1);

    app.add_option("--input,--input_uri", cfg.input_uri, "Input file");
    app.add_option("--output,--output_uri", cfg.output_uri, "Output file");
    app.add_option("--t-img,--t_img", cfg.packer.t_img, "Image threshold per packed sequence");
    app.add_option("--t-tok,--t_tok", cfg.packer.t_tok, "Token threshold per packed sequence");
    app.add_option("--max-subsamples,--max_subsamples", cfg.packer.max_subsamples, "Sub-samples per sequence");
    app.add_option("--buffer-cap,--buffer_cap", cfg.packer.buffer_cap, "Buffer list capacity");
    app.add_option("--policy", o.policy, "first_fit | front_only");
    app.add_option("--tile-resolution,--tile_resolution_px", cfg.tiles.tile_resolution_px, "Tile edge in pixels");
    app.add_option("--max-tiles,--max_tiles", cfg.tiles.max_tiles, "Maximum tiles per image");
    app.add_option("--tokens-per-tile,--tokens_per_tile", cfg.tiles.tokens_per_tile, "Tokens per tile");
    app.add_option("--use-thumbnail,--use_thumbnail", cfg.tiles.use_thumbnail, "Add a thumbnail tile");
    app.add_option("--tokenizer", o.tokenizer, "reference | external");
    app.add_option("--tokenizer-command,--tokenizer_command", o.tokenizer_command, "External tokenizer executable");
    app.add_option("--tokenizer-vocab,--external_vocab_uri", o.tokenizer_vocab, "External tokenizer vocabulary");
    app.add_option("--text-atom-tokens,--text_atom_tokens", cfg.measure.text_atom_tokens, "Max tokens per text atom");
    app.add_option("--tasks", o.tasks, "Comma-separated task list (default: all)");
    app.add_option("--context-format,--context_format", o.context_format, "interleaved | multi_image | both");
    app.add_option("--seed", cfg.seed, "Seed for synthetic streams");
    app.add_option("--shards,--shard_count", cfg.shard_count, "Number of shards");
    app.add_option("--templates", o.templates, "JSON file overriding question templates");

    auto* ingest = app.add_subcommand("ingest", "Parse an interchange corpus into a document store");
    ingest->add_flag("--strict", o.strict, "Exit nonzero if any record fails");

    auto* build = app.add_subcommand("build-qa", "Build conversations from a document store");
    build->add_option("--external-qa,--external_qa", o.external_qa, "JSONL of generated QA pairs per document");
    build->add_option("--translations", o.translations, "JSONL of experiments-section translations");

    auto* pack = app.add_subcommand("pack", "Measure and pack conversations");
    pack->add_option("--report", o.report, "Report JSON path (default <output>.report.json)");
    pack->add_option("--debug-jsonl,--debug_jsonl", o.debug_jsonl, "Also write a JSONL rendering of the records");

    auto* stats = app.add_subcommand("stats", "Corpus statistics and packing reports");
    stats->add_option("--packed", o.packed, "Packed dataset file(s)");
    stats->add_option("--format", o.format, "table | json")->check(CLI::IsMember({"table", "json"}));

    auto* bench = app.add_subcommand("bench", "Compare packing against per-sample padding on a synthetic stream");
    bench->add_option("--distribution", o.distribution, "constant | uniform | lognormal | bimodal");
    bench->add_option("--samples", o.synth.samples, "Number of samples");
    bench->add_option("--min-tokens,--min_tokens", o.synth.min_tokens, "Minimum text tokens");
    bench->add_option("--max-tokens,--max_tokens", o.synth.max_tokens, "Maximum text tokens");
    bench->add_option("--log-mean,--log_mean", o.synth.log_mean, "Log-normal mean in log space");
    bench->add_option("--log-sigma,--log_sigma", o.synth.log_sigma, "Log-normal sigma");
    bench->add_option("--max-images,--max_images", o.synth.max_images, "Maximum images per sample");
    bench->add_option("--image-tokens,--image_tokens", o.synth.image_tokens, "Tokens per image");
    bench->add_option("--format", o.format, "table | json")->check(CLI::IsMember({"table", "json"}));

    for (auto* sub : {ingest, build, pack, stats, bench}) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return static_cast<int>(ErrorCategory::config);
    }

    try {
        finish_config(o);
        if (*ingest) return cmd_ingest(o);
        if (*build) return cmd_build_qa(o);
        if (*pack) return cmd_pack(o);
        if (*stats) return cmd_stats(o);
        if (*bench) return cmd_bench(o);
    } catch (const docpack::Error& e) {
        spdlog::error("{}", e.what());
        return static_cast<int>(e.category());
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
