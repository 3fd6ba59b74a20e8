#pragma once

// Multimodal sequence packing under an image threshold and a token threshold.

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "docpack/error.hpp"
#include "docpack/sample.hpp"

namespace docpack {

enum class FindPolicy {
    first_fit,   // scan buffers in priority order, take the first that fits
    front_only,  // only try the front buffer
};

struct PackerConfig {
    std::uint32_t t_img = 48;
    std::uint32_t t_tok = 32768;
    std::uint32_t max_subsamples = 64;
    std::uint32_t buffer_cap = 512;
    FindPolicy policy = FindPolicy::first_fit;

    void validate() const {
        if (t_img < 1 || t_tok < 1 || max_subsamples < 1 || buffer_cap < 1)
            throw ConfigError("t_img, t_tok, max_subsamples and buffer_cap must be >= 1");
    }
};

struct CheckResult {
    std::vector<Sample> emitted;
    std::optional<Sample> remainder;
};

// Splits an over-threshold sample into parts at atom boundaries. A part is
// closed once it holds exactly t_tok tokens or t_img images, or when the next
// atom would push it past t_tok. All parts but the last are returned in
// `emitted`.
inline CheckResult check_sample(const Sample& s, const PackerConfig& cfg) {
    for (std::size_t i = 0; i < s.payload.size(); ++i)
        if (s.payload[i].length > cfg.t_tok) throw AtomTooLarge(s.id, s.atom_offset + i, s.payload[i].length);

    CheckResult out;
    if (s.n_tokens <= cfg.t_tok && s.n_images <= cfg.t_img) {
        out.remainder = s;
        return out;
    }

    Sample part;
    part.id = s.id;
    part.atom_offset = s.atom_offset;
    for (std::size_t i = 0; i < s.payload.size(); ++i) {
        const Atom& a = s.payload[i];
        const bool full = part.n_tokens == cfg.t_tok || part.n_images == cfg.t_img;
        const bool overflow = part.n_tokens + a.length > cfg.t_tok;
        if (!part.payload.empty() && (full || overflow)) {
            out.emitted.push_back(std::move(part));
            part = Sample{};
            part.id = s.id;
            part.atom_offset = s.atom_offset + static_cast<std::uint32_t>(i);
        }
        part.push(a);
    }
    out.remainder = std::move(part);
    return out;
}

// One original sample's span inside a packed sequence.
struct SubSample {
    std::string source_sample_id;
    std::uint32_t atom_offset = 0;
    std::vector<Atom> atoms;
    std::uint64_t n_tokens = 0;
    std::uint32_t n_images = 0;

    bool operator==(const SubSample&) const = default;
};

inline SubSample to_subsample(Sample s) {
    return SubSample{std::move(s.id), s.atom_offset, std::move(s.payload), s.n_tokens, s.n_images};
}

inline constexpr std::int32_t kPadSegment = -1;
inline constexpr std::uint8_t kPadRole = 255;

struct PackedSample {
    std::vector<SubSample> subsamples;
    std::uint64_t n_tokens = 0;
    std::uint32_t n_images = 0;
    std::uint64_t pad_tokens = 0;

    std::uint64_t physical_length() const noexcept { return n_tokens + pad_tokens; }

    // Per payload token: index of its sub-sample.
    std::vector<std::int32_t> segment_ids() const {
        std::vector<std::int32_t> ids;
        ids.reserve(n_tokens);
        for (std::size_t k = 0; k < subsamples.size(); ++k)
            ids.insert(ids.end(), subsamples[k].n_tokens, static_cast<std::int32_t>(k));
        return ids;
    }

    // Per payload token: position within its sub-sample, restarting at 0.
    std::vector<std::int32_t> positions() const {
        std::vector<std::int32_t> pos;
        pos.reserve(n_tokens);
        for (const auto& sub : subsamples)
            for (std::uint64_t i = 0; i < sub.n_tokens; ++i) pos.push_back(static_cast<std::int32_t>(i));
        return pos;
    }

    std::vector<std::uint8_t> role_labels() const {
        std::vector<std::uint8_t> roles;
        roles.reserve(n_tokens);
        for (const auto& sub : subsamples)
            for (const auto& a : sub.atoms) roles.insert(roles.end(), a.length, static_cast<std::uint8_t>(a.role));
        return roles;
    }

    bool operator==(const PackedSample&) const = default;
};

struct AttentionLayout {
    // Physical length; pad tokens carry kPadSegment.
    std::vector<std::int32_t> segment_ids;
    // [begin, end) token range of each sub-sample.
    std::vector<std::pair<std::uint64_t, std::uint64_t>> boundaries;

    // Causal attention confined to one segment; pad attends to nothing.
    bool admissible(std::size_t query, std::size_t key) const {
        const auto sq = segment_ids[query];
        return sq != kPadSegment && sq == segment_ids[key] && key <= query;
    }
};

inline AttentionLayout attention_segments(const PackedSample& p) {
    AttentionLayout out;
    out.segment_ids = p.segment_ids();
    out.segment_ids.insert(out.segment_ids.end(), p.pad_tokens, kPadSegment);
    std::uint64_t begin = 0;
    for (const auto& sub : p.subsamples) {
        out.boundaries.emplace_back(begin, begin + sub.n_tokens);
        begin += sub.n_tokens;
    }
    return out;
}

// Buffer list plus the packing state machine. Single writer.
class Packer {
public:
    struct Buffer {
        std::vector<Sample> parts;
        std::uint32_t n_images = 0;
        std::uint64_t n_tokens = 0;
    };

    struct Key {
        std::uint32_t n_images;
        std::uint64_t n_tokens;
        std::uint64_t seq;
    };

    // Descending by (images, tokens); older buffers first among equals.
    struct KeyOrder {
        bool operator()(const Key& a, const Key& b) const {
            if (a.n_images != b.n_images) return a.n_images > b.n_images;
            if (a.n_tokens != b.n_tokens) return a.n_tokens > b.n_tokens;
            return a.seq < b.seq;
        }
    };

    using BufferMap = std::map<Key, Buffer, KeyOrder>;
    using Handle = BufferMap::const_iterator;

    struct Counters {
        std::uint64_t pushed = 0;
        std::uint64_t emitted = 0;
        std::uint64_t truncated = 0;
        std::uint64_t evicted = 0;
        std::uint64_t flushed = 0;
        // Ordered-map lookups made by find_buffer.
        std::uint64_t lookups = 0;
    };

    explicit Packer(PackerConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

    const PackerConfig& config() const noexcept { return cfg_; }
    const BufferMap& buffers() const noexcept { return buffers_; }
    const Counters& counters() const noexcept { return counters_; }

    // First buffer in priority order that can take `s` without exceeding either
    // threshold. With the maintained order this is the fit with the most
    // images, then the most tokens.
    std::optional<Handle> find_buffer(const Sample& s) const {
        if (buffers_.empty() || s.n_images > cfg_.t_img || s.n_tokens > cfg_.t_tok) return std::nullopt;
        const std::uint32_t cap_img = cfg_.t_img - s.n_images;
        const std::uint64_t cap_tok = cfg_.t_tok - s.n_tokens;

        if (cfg_.policy == FindPolicy::front_only) {
            auto front = buffers_.begin();
            if (front->first.n_images <= cap_img && front->first.n_tokens <= cap_tok) return front;
            return std::nullopt;
        }

        // One ordered lookup per distinct image count at or below cap_img.
        std::uint32_t images = std::min(cap_img, buffers_.begin()->first.n_images);
        for (;;) {
            ++counters_.lookups;
            auto it = buffers_.lower_bound(Key{images, cap_tok, 0});
            if (it == buffers_.end()) return std::nullopt;
            if (it->first.n_images == images) return it;
            images = it->first.n_images;
        }
    }

    // Emitted sequences in order: truncated parts, then a buffer that became
    // full, then an evicted buffer.
    std::vector<PackedSample> push(const Sample& s) {
        ++counters_.pushed;
        auto checked = check_sample(s, cfg_);
        std::vector<PackedSample> out;
        if (!checked.emitted.empty()) ++counters_.truncated;
        for (auto& part : checked.emitted) {
            std::vector<Sample> single;
            single.push_back(std::move(part));
            out.push_back(finalize(std::move(single)));
        }

        Sample rest = std::move(*checked.remainder);
        if (rest.payload.empty()) return out;

        Buffer merged;
        if (auto found = find_buffer(rest)) {
            auto node = buffers_.extract(*found);
            merged = std::move(node.mapped());
        }
        merged.n_images += rest.n_images;
        merged.n_tokens += rest.n_tokens;
        merged.parts.push_back(std::move(rest));

        if (merged.n_images == cfg_.t_img || merged.n_tokens == cfg_.t_tok ||
            merged.parts.size() >= cfg_.max_subsamples) {
            out.push_back(finalize(std::move(merged.parts)));
        } else {
            buffers_.emplace(Key{merged.n_images, merged.n_tokens, next_seq_++}, std::move(merged));
        }

        if (buffers_.size() > cfg_.buffer_cap) {
            auto node = buffers_.extract(buffers_.begin());
            ++counters_.evicted;
            out.push_back(finalize(std::move(node.mapped().parts)));
        }
        return out;
    }

    // Drains every buffer in priority order.
    std::vector<PackedSample> flush() {
        std::vector<PackedSample> out;
        out.reserve(buffers_.size());
        while (!buffers_.empty()) {
            auto node = buffers_.extract(buffers_.begin());
            ++counters_.flushed;
            out.push_back(finalize(std::move(node.mapped().parts)));
        }
        return out;
    }

private:
    PackedSample finalize(std::vector<Sample> parts) {
        PackedSample p;
        p.subsamples.reserve(parts.size());
        for (auto& part : parts) {
            p.n_tokens += part.n_tokens;
            p.n_images += part.n_images;
            p.subsamples.push_back(to_subsample(std::move(part)));
        }
        p.pad_tokens = cfg_.t_tok - p.n_tokens;
        ++counters_.emitted;
        return p;
    }

    PackerConfig cfg_;
    BufferMap buffers_;
    std::uint64_t next_seq_ = 0;
    mutable Counters counters_;
};

// Packs a whole stream with a fresh state, flushing at the end.
inline std::vector<PackedSample> pack_stream(const std::vector<Sample>& samples, const PackerConfig& cfg) {
    Packer packer(cfg);
    std::vector<PackedSample> out;
    for (const auto& s : samples) {
        auto emitted = packer.push(s);
        std::move(emitted.begin(), emitted.end(), std::back_inserter(out));
    }
    auto rest = packer.flush();
    std::move(rest.begin(), rest.end(), std::back_inserter(out));
    return out;
}

}  // namespace docpack
