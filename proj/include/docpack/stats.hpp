#pragma once

// Corpus statistics and packing-efficiency reports.

#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "docpack/error.hpp"
#include "docpack/packer.hpp"
#include "docpack/qa.hpp"
#include "docpack/sample.hpp"

namespace docpack {

// Exact non-negative rational.
struct Ratio {
    std::uint64_t num = 0;
    std::uint64_t den = 1;

    double value() const noexcept { return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den); }

    bool operator==(const Ratio& o) const noexcept {
        return static_cast<unsigned __int128>(num) * o.den == static_cast<unsigned __int128>(o.num) * den;
    }
};

struct CorpusStats {
    std::uint64_t total_questions = 0;
    std::uint64_t total_images = 0;
    std::uint64_t total_conversations = 0;
    std::uint64_t multi_turn_conversations = 0;
    std::uint64_t single_turn_conversations = 0;
    std::uint64_t total_text_tokens = 0;
    std::uint64_t total_image_tokens = 0;

    Ratio avg_text_tokens() const { return {total_text_tokens, total_conversations ? total_conversations : 1}; }
    Ratio avg_image_tokens() const { return {total_image_tokens, total_conversations ? total_conversations : 1}; }

    void add(const Conversation& conv, const Sample& measured) {
        // A next-token-prediction record has no question.
        if (!conv.is_ntp()) total_questions += conv.turns.size();
        total_images += measured.n_images;
        ++total_conversations;
        if (conv.multi_turn())
            ++multi_turn_conversations;
        else
            ++single_turn_conversations;
        total_text_tokens += measured.n_text_tokens;
        total_image_tokens += measured.n_image_tokens;
    }

    CorpusStats& operator+=(const CorpusStats& o) {
        total_questions += o.total_questions;
        total_images += o.total_images;
        total_conversations += o.total_conversations;
        multi_turn_conversations += o.multi_turn_conversations;
        single_turn_conversations += o.single_turn_conversations;
        total_text_tokens += o.total_text_tokens;
        total_image_tokens += o.total_image_tokens;
        return *this;
    }

    bool operator==(const CorpusStats&) const = default;
};

inline CorpusStats corpus_stats(const std::vector<Conversation>& convs, const std::vector<Sample>& measured) {
    if (convs.size() != measured.size())
        throw StreamMismatch(std::to_string(convs.size()) + " conversations vs " + std::to_string(measured.size()) +
                             " samples");
    CorpusStats st;
    for (std::size_t i = 0; i < convs.size(); ++i) st.add(convs[i], measured[i]);
    return st;
}

struct PackingReport {
    std::uint64_t packed_sequences = 0;
    std::uint64_t total_payload_tokens = 0;
    std::uint64_t total_pad_tokens = 0;
    std::uint64_t naive_pad_tokens = 0;
    std::uint64_t naive_sequences = 0;
    std::uint64_t truncated_samples = 0;
    std::uint64_t subsamples = 0;

    Ratio utilization() const {
        const auto physical = total_payload_tokens + total_pad_tokens;
        return {total_payload_tokens, physical ? physical : 1};
    }

    // naive_pad / max(pad, 1); 1 when neither policy pads at all.
    Ratio waste_reduction_ratio() const {
        if (naive_pad_tokens == 0 && total_pad_tokens == 0) return {1, 1};
        return {naive_pad_tokens, total_pad_tokens ? total_pad_tokens : 1};
    }

    bool operator==(const PackingReport&) const = default;
};

// Folds packed sequences into a report. Every sub-sample is one part produced
// by check_sample, so the naive baseline pads each sub-sample on its own.
class PackingReportBuilder {
public:
    explicit PackingReportBuilder(const PackerConfig& cfg) : t_tok_(cfg.t_tok) {}

    void add(const PackedSample& p) {
        ++r_.packed_sequences;
        r_.total_payload_tokens += p.n_tokens;
        r_.total_pad_tokens += p.pad_tokens;
        for (const auto& sub : p.subsamples) {
            ++r_.subsamples;
            ++r_.naive_sequences;
            r_.naive_pad_tokens += t_tok_ - std::min<std::uint64_t>(sub.n_tokens, t_tok_);
            if (sub.atom_offset > 0) truncated_.insert(sub.source_sample_id);
        }
    }

    PackingReport report() const {
        PackingReport out = r_;
        out.truncated_samples = truncated_.size();
        return out;
    }

private:
    std::uint64_t t_tok_;
    PackingReport r_;
    std::unordered_set<std::string> truncated_;
};

inline PackingReport packing_report(const std::vector<PackedSample>& packed, const PackerConfig& cfg) {
    PackingReportBuilder b(cfg);
    for (const auto& p : packed) b.add(p);
    return b.report();
}

// The baseline as if it were a packing policy: one sequence per part.
inline PackingReport naive_report(const PackingReport& packed) {
    PackingReport out;
    out.packed_sequences = packed.naive_sequences;
    out.total_payload_tokens = packed.total_payload_tokens;
    out.total_pad_tokens = packed.naive_pad_tokens;
    out.naive_pad_tokens = packed.naive_pad_tokens;
    out.naive_sequences = packed.naive_sequences;
    out.truncated_samples = packed.truncated_samples;
    out.subsamples = packed.subsamples;
    return out;
}

inline nlohmann::json to_json(const Ratio& r) {
    return nlohmann::json{{"num", r.num}, {"den", r.den}, {"value", r.value()}};
}

inline nlohmann::json to_json(const CorpusStats& s) {
    return nlohmann::json{{"total_questions", s.total_questions},
                          {"total_images", s.total_images},
                          {"total_conversations", s.total_conversations},
                          {"multi_turn_conversations", s.multi_turn_conversations},
                          {"single_turn_conversations", s.single_turn_conversations},
                          {"total_text_tokens", s.total_text_tokens},
                          {"total_image_tokens", s.total_image_tokens},
                          {"avg_text_tokens", to_json(s.avg_text_tokens())},
                          {"avg_image_tokens", to_json(s.avg_image_tokens())}};
}

inline nlohmann::json to_json(const PackingReport& r) {
    return nlohmann::json{{"packed_sequences", r.packed_sequences},
                          {"total_payload_tokens", r.total_payload_tokens},
                          {"total_pad_tokens", r.total_pad_tokens},
                          {"naive_pad_tokens", r.naive_pad_tokens},
                          {"naive_sequences", r.naive_sequences},
                          {"truncated_samples", r.truncated_samples},
                          {"subsamples", r.subsamples},
                          {"utilization", to_json(r.utilization())},
                          {"waste_reduction_ratio", to_json(r.waste_reduction_ratio())}};
}

namespace detail {

inline std::string fixed(double v, int digits) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

inline std::string aligned_table(const std::vector<std::pair<std::string, std::string>>& rows,
                                 const std::string& left_header, const std::string& right_header) {
    std::size_t lw = left_header.size(), rw = right_header.size();
    for (const auto& [l, r] : rows) {
        lw = std::max(lw, l.size());
        rw = std::max(rw, r.size());
    }
    std::ostringstream os;
    os << std::left << std::setw(static_cast<int>(lw)) << left_header << "  " << std::right
       << std::setw(static_cast<int>(rw)) << right_header << '\n';
    os << std::string(lw + 2 + rw, '-') << '\n';
    for (const auto& [l, r] : rows)
        os << std::left << std::setw(static_cast<int>(lw)) << l << "  " << std::right
           << std::setw(static_cast<int>(rw)) << r << '\n';
    return os.str();
}

}  // namespace detail

inline std::string format_table(const CorpusStats& s) {
    return detail::aligned_table({{"Total Questions", std::to_string(s.total_questions)},
                                  {"Total Images", std::to_string(s.total_images)},
                                  {"Total Conversations", std::to_string(s.total_conversations)},
                                  {"Multi-Turn Questions", std::to_string(s.multi_turn_conversations)},
                                  {"Single-Turn Questions", std::to_string(s.single_turn_conversations)},
                                  {"Average Text Tokens", detail::fixed(s.avg_text_tokens().value(), 2)},
                                  {"Average Image Tokens", detail::fixed(s.avg_image_tokens().value(), 2)}},
                                 "Statistics", "Number");
}

inline std::string format_table(const PackingReport& packed) {
    const auto naive = naive_report(packed);
    std::ostringstream os;
    auto row = [&](const std::string& label, const std::string& a, const std::string& b) {
        os << std::left << std::setw(24) << label << std::right << std::setw(16) << a << std::setw(16) << b << '\n';
    };
    row("Metric", "packed", "naive");
    os << std::string(56, '-') << '\n';
    row("Sequences", std::to_string(packed.packed_sequences), std::to_string(naive.packed_sequences));
    row("Payload Tokens", std::to_string(packed.total_payload_tokens), std::to_string(naive.total_payload_tokens));
    row("Pad Tokens", std::to_string(packed.total_pad_tokens), std::to_string(naive.total_pad_tokens));
    row("Utilization", detail::fixed(packed.utilization().value(), 4), detail::fixed(naive.utilization().value(), 4));
    row("Truncated Samples", std::to_string(packed.truncated_samples), std::to_string(naive.truncated_samples));
    os << "Waste Reduction Ratio: " << detail::fixed(packed.waste_reduction_ratio().value(), 4) << '\n';
    return os.str();
}

}  // namespace docpack
