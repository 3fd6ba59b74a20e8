#pragma once

// End-to-end drivers behind the CLI subcommands: ingest, build-qa, pack,
// stats and bench. Everything here is deterministic for a fixed input and
// configuration; sharded packing merges outputs in shard order.

#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "docpack/error.hpp"
#include "docpack/ingest.hpp"
#include "docpack/packed_io.hpp"
#include "docpack/packer.hpp"
#include "docpack/qa.hpp"
#include "docpack/stats.hpp"
#include "docpack/synth.hpp"
#include "docpack/templates.hpp"
#include "docpack/tokenize.hpp"

namespace docpack {

enum class ContextSelection { interleaved, multi_image, both };

inline std::optional<ContextSelection> parse_context_selection(std::string_view s) {
    if (s == "interleaved") return ContextSelection::interleaved;
    if (s == "multi_image" || s == "multi-image") return ContextSelection::multi_image;
    if (s == "both") return ContextSelection::both;
    return std::nullopt;
}

struct PipelineConfig {
    std::string input_uri;
    std::string output_uri;
    PackerConfig packer;
    TileConfig tiles;
    TokenizerSpec tokenizer;
    MeasureOptions measure;
    TaskSet tasks = TaskSet::all();
    ContextSelection context_format = ContextSelection::interleaved;
    std::uint64_t seed = 0;
    std::uint32_t shard_count = 1;
    Templates templates;

    void validate() const {
        packer.validate();
        tiles.validate();
        tokenizer.validate();
        if (shard_count < 1) throw ConfigError("shard_count must be >= 1");
        if (measure.text_atom_tokens < 1) throw ConfigError("text_atom_tokens must be >= 1");
        if (!input_uri.empty() && !output_uri.empty()) {
            std::error_code ec;
            if (input_uri == output_uri || std::filesystem::equivalent(input_uri, output_uri, ec))
                throw ConfigError("output must differ from input");
        }
    }
};

struct RecordError {
    std::size_t line = 0;
    std::string message;
};

// ---------------------------------------------------------------- ingest

struct IngestResult {
    std::vector<Document> documents;
    std::vector<RecordError> errors;
    std::size_t lines = 0;
};

// Blank lines are skipped. Duplicate ids are record errors.
inline IngestResult ingest_corpus(std::istream& in) {
    IngestResult out;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++out.lines;
        try {
            auto doc = parse_document(std::string_view(line));
            if (!seen.insert(doc.id).second) throw SchemaViolation("id (duplicate '" + doc.id + "')");
            out.documents.push_back(std::move(doc));
        } catch (const Error& e) {
            out.errors.push_back({lineno, e.what()});
        }
    }
    return out;
}

inline void write_documents(std::ostream& out, const std::vector<Document>& docs) {
    for (const auto& d : docs) out << serialize_document(d).dump() << '\n';
}

// ---------------------------------------------------------------- build-qa

using ExternalQA = std::map<std::string, std::vector<std::pair<std::string, std::string>>>;
using Translations = std::map<std::string, std::string>;

inline ExternalQA read_external_qa(std::istream& in) {
    ExternalQA out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = json::parse(line);
            auto id = detail::require_string(j, "doc_id");
            const auto& qa = detail::require_array(j, "qa");
            auto& dst = out[id];
            for (std::size_t i = 0; i < qa.size(); ++i) {
                const std::string path = "qa[" + std::to_string(i) + "]";
                dst.emplace_back(detail::require_string(qa[i], "question", path),
                                 detail::require_string(qa[i], "answer", path));
            }
        } catch (const json::exception& e) {
            throw MalformedRecord("external QA line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

inline Translations read_translations(std::istream& in) {
    Translations out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = json::parse(line);
            out[detail::require_string(j, "doc_id")] = detail::require_string(j, "translation");
        } catch (const json::exception& e) {
            throw MalformedRecord("translations line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

struct BuildQaInputs {
    ExternalQA external_qa;
    Translations translations;
};

struct SkipNote {
    std::string doc_id;
    std::string reason;
};

struct BuildQaResult {
    std::vector<Conversation> conversations;
    std::map<std::string, std::size_t> per_task;  // keyed by first-turn task
    std::vector<SkipNote> skipped;
};

// Tasks whose context is the unmodified paper, so a page rendering can stand in.
inline bool multi_image_eligible(Task t) {
    return t == Task::review_writing || t == Task::reply_writing || t == Task::translation ||
           t == Task::external_generated || t == Task::ntp;
}

inline BuildQaResult build_qa(const std::vector<Document>& docs, const PipelineConfig& cfg,
                              const BuildQaInputs& inputs = {}) {
    BuildQaResult out;
    const bool want_inter = cfg.context_format != ContextSelection::multi_image;
    const bool want_multi = cfg.context_format != ContextSelection::interleaved;

    for (const auto& doc : docs) {
        std::vector<Conversation> built;
        ExternalAnswers ext;
        if (auto it = inputs.translations.find(doc.id); it != inputs.translations.end()) ext.translation = it->second;

        auto structured = build_structured_tasks(doc, cfg.tasks, cfg.templates, ext);
        for (auto& c : structured.conversations) built.push_back(std::move(c));
        for (const auto& miss : structured.skipped) out.skipped.push_back({doc.id, miss.what()});

        if (cfg.tasks.contains(Task::review_writing) || cfg.tasks.contains(Task::reply_writing)) {
            if (doc.reviews.empty()) {
                out.skipped.push_back({doc.id, NoReviews(doc.id).what()});
            } else {
                for (auto& c : build_review_reply(doc, cfg.templates))
                    if (cfg.tasks.contains(c.turns.front().task)) built.push_back(std::move(c));
            }
        }
        if (cfg.tasks.contains(Task::external_generated)) {
            if (auto it = inputs.external_qa.find(doc.id); it != inputs.external_qa.end())
                built.push_back(attach_external_qa(doc, it->second));
        }
        if (built.empty() && cfg.tasks.contains(Task::ntp)) built.push_back(build_ntp(doc));

        for (auto& conv : built) {
            const Task task = conv.turns.front().task;
            const bool multi_ok = multi_image_eligible(task) && !doc.pages.empty();
            if (want_multi && !multi_ok)
                out.skipped.push_back({doc.id, doc.pages.empty()
                                                   ? "no page manifest; " + std::string(to_string(task)) + " kept interleaved"
                                                   : "multi_image context not used for " + std::string(to_string(task))});
            // Interleaved is the fallback when pages cannot replace the context.
            if (want_inter || !multi_ok) out.conversations.push_back(conv);
            if (want_multi && multi_ok) {
                Conversation m = conv;
                m.context = to_multi_image(doc);
                out.conversations.push_back(std::move(m));
            }
            ++out.per_task[std::string(to_string(task))];
        }
    }
    return out;
}

inline std::vector<Conversation> read_conversations(std::istream& in) {
    std::vector<Conversation> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(parse_conversation(json::parse(line)));
        } catch (const json::parse_error& e) {
            throw MalformedRecord("conversation line " + std::to_string(lineno) + ": " + e.what());
        } catch (const SchemaViolation& e) {
            throw SchemaViolation("conversation line " + std::to_string(lineno) + ": " + e.field());
        }
    }
    return out;
}

inline void write_conversations(std::ostream& out, const std::vector<Conversation>& convs) {
    for (const auto& c : convs) out << serialize_conversation(c).dump() << '\n';
}

// ---------------------------------------------------------------- measure / pack

// Sample ids are "<doc_id>#<n>" with n counting that document's conversations
// in store order.
inline std::vector<Sample> measure_all(const std::vector<Conversation>& convs, const PipelineConfig& cfg) {
    std::unordered_map<std::string, std::size_t> per_doc;
    std::vector<Sample> out;
    out.reserve(convs.size());
    for (const auto& c : convs) {
        const auto n = per_doc[c.doc_id]++;
        out.push_back(measure_sample(c, c.doc_id + "#" + std::to_string(n), cfg.tokenizer, cfg.tiles, cfg.measure,
                                     cfg.templates.conversation));
    }
    return out;
}

struct PackResult {
    std::vector<std::vector<PackedSample>> shards;
    PackingReport report;
};

// Sample i goes to shard i % shard_count; each shard packs with its own state.
inline PackResult pack_samples(const std::vector<Sample>& samples, const PipelineConfig& cfg) {
    cfg.validate();
    const std::uint32_t n = cfg.shard_count;
    std::vector<std::vector<Sample>> inputs(n);
    for (std::size_t i = 0; i < samples.size(); ++i) inputs[i % n].push_back(samples[i]);

    std::vector<std::future<std::vector<PackedSample>>> jobs;
    for (std::uint32_t s = 0; s < n; ++s)
        jobs.push_back(std::async(n > 1 ? std::launch::async : std::launch::deferred,
                                  [&, s] { return pack_stream(inputs[s], cfg.packer); }));

    PackResult out;
    PackingReportBuilder report(cfg.packer);
    for (auto& job : jobs) {
        out.shards.push_back(job.get());
        for (const auto& p : out.shards.back()) report.add(p);
    }
    out.report = report.report();
    return out;
}

inline std::string shard_path(const std::string& output, std::uint32_t shard, std::uint32_t count) {
    if (count == 1) return output;
    char suffix[32];
    std::snprintf(suffix, sizeof suffix, "-%05u-of-%05u", shard, count);
    return output + suffix;
}

inline std::vector<std::string> write_pack_outputs(const PackResult& r, const PipelineConfig& cfg,
                                                   const std::string& debug_jsonl = {}) {
    std::vector<std::string> paths;
    const auto n = static_cast<std::uint32_t>(r.shards.size());
    std::ofstream debug;
    if (!debug_jsonl.empty()) {
        debug.open(debug_jsonl, std::ios::binary);
        if (!debug) throw IoError("cannot open " + debug_jsonl);
    }
    for (std::uint32_t s = 0; s < n; ++s) {
        const auto path = shard_path(cfg.output_uri, s, n);
        std::ofstream out(path, std::ios::binary);
        if (!out) throw IoError("cannot open " + path);
        write_packed_header(out, cfg.packer);
        for (const auto& p : r.shards[s]) {
            write_packed_record(out, p);
            if (debug) debug << packed_record_json(p).dump() << '\n';
        }
        paths.push_back(path);
    }
    return paths;
}

// ---------------------------------------------------------------- stats

inline CorpusStats sharded_corpus_stats(const std::vector<Conversation>& convs, const std::vector<Sample>& measured,
                                        std::uint32_t shard_count) {
    if (convs.size() != measured.size())
        throw StreamMismatch(std::to_string(convs.size()) + " conversations vs " + std::to_string(measured.size()) +
                             " samples");
    std::vector<CorpusStats> parts(std::max(1u, shard_count));
    for (std::size_t i = 0; i < convs.size(); ++i) parts[i % parts.size()].add(convs[i], measured[i]);
    CorpusStats total;
    for (const auto& p : parts) total += p;
    return total;
}

// ---------------------------------------------------------------- bench

struct BenchResult {
    PackingReport packed;
    PackingReport naive;
};

inline BenchResult run_bench(const SynthSpec& spec, const PackerConfig& cfg) {
    const auto samples = synth_stream(spec);
    const auto report = packing_report(pack_stream(samples, cfg), cfg);
    return {report, naive_report(report)};
}

}  // namespace docpack
