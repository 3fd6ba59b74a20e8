#pragma once

// Seeded synthetic sample streams for benchmarking the packer.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "docpack/error.hpp"
#include "docpack/sample.hpp"

namespace docpack {

enum class LengthDistribution { constant, uniform, lognormal, bimodal };

inline std::optional<LengthDistribution> parse_distribution(std::string_view s) {
    if (s == "constant") return LengthDistribution::constant;
    if (s == "uniform") return LengthDistribution::uniform;
    if (s == "lognormal" || s == "log-normal") return LengthDistribution::lognormal;
    if (s == "bimodal") return LengthDistribution::bimodal;
    return std::nullopt;
}

struct SynthSpec {
    LengthDistribution distribution = LengthDistribution::lognormal;
    std::uint64_t samples = 1000;
    // Text token length bounds; constant uses min_tokens.
    std::uint32_t min_tokens = 1024;
    std::uint32_t max_tokens = 16384;
    // Log-space parameters; a zero log_mean places the median at the
    // geometric mean of the bounds.
    double log_mean = 0.0;
    double log_sigma = 0.75;
    // Images per sample drawn uniformly from [0, max_images].
    std::uint32_t max_images = 0;
    std::uint32_t image_tokens = 256;
    std::uint32_t text_atom_tokens = 32;
    std::uint64_t seed = 0;

    void validate() const {
        if (min_tokens > max_tokens) throw ConfigError("min_tokens must not exceed max_tokens");
        if (text_atom_tokens < 1 || image_tokens < 1) throw ConfigError("atom sizes must be >= 1");
        if (!(log_sigma >= 0.0)) throw ConfigError("log_sigma must be >= 0");
    }
};

// Text atoms of at most text_atom_tokens, with images spread evenly between
// them. Roles: first quarter context, then question, rest answer.
inline Sample synth_sample(std::string id, std::uint64_t text_tokens, std::uint32_t images, const SynthSpec& spec) {
    Sample s;
    s.id = std::move(id);
    const std::uint64_t n_text_atoms = (text_tokens + spec.text_atom_tokens - 1) / spec.text_atom_tokens;
    const std::uint64_t slots = n_text_atoms + 1;
    std::uint64_t remaining = text_tokens;
    std::uint32_t placed = 0;
    for (std::uint64_t a = 0; a <= n_text_atoms; ++a) {
        // Images due before text atom `a`.
        const std::uint64_t due = images * (a + 1) / slots;
        while (placed < due) {
            s.push(Atom{AtomKind::image, Role::context, spec.image_tokens});
            ++placed;
        }
        if (a == n_text_atoms) break;
        const auto len = static_cast<std::uint32_t>(std::min<std::uint64_t>(remaining, spec.text_atom_tokens));
        const std::uint64_t consumed = text_tokens - remaining;
        const Role role = consumed * 4 < text_tokens ? Role::context
                          : consumed * 2 < text_tokens ? Role::question
                                                       : Role::answer;
        s.push(Atom{AtomKind::text, role, len});
        remaining -= len;
    }
    return s;
}

inline std::vector<Sample> synth_stream(const SynthSpec& spec) {
    spec.validate();
    std::mt19937_64 rng(spec.seed);
    std::uniform_int_distribution<std::uint32_t> uniform(spec.min_tokens, spec.max_tokens);
    std::uniform_int_distribution<std::uint32_t> image_count(0, spec.max_images);
    const double mean = spec.log_mean != 0.0
                            ? spec.log_mean
                            : 0.5 * (std::log(std::max(1u, spec.min_tokens)) + std::log(std::max(1u, spec.max_tokens)));
    std::lognormal_distribution<double> lognormal(mean, spec.log_sigma);
    std::bernoulli_distribution coin(0.5);
    const std::uint32_t span = spec.max_tokens - spec.min_tokens;
    std::uniform_int_distribution<std::uint32_t> low(spec.min_tokens, spec.min_tokens + span / 4);
    std::uniform_int_distribution<std::uint32_t> high(spec.max_tokens - span / 4, spec.max_tokens);

    std::vector<Sample> out;
    out.reserve(spec.samples);
    for (std::uint64_t i = 0; i < spec.samples; ++i) {
        std::uint64_t len = spec.min_tokens;
        switch (spec.distribution) {
            case LengthDistribution::constant: break;
            case LengthDistribution::uniform: len = uniform(rng); break;
            case LengthDistribution::lognormal:
                len = static_cast<std::uint64_t>(std::llround(
                    std::clamp(lognormal(rng), double(spec.min_tokens), double(spec.max_tokens))));
                break;
            case LengthDistribution::bimodal: len = coin(rng) ? high(rng) : low(rng); break;
        }
        const std::uint32_t images = spec.max_images ? image_count(rng) : 0;
        out.push_back(synth_sample("synth-" + std::to_string(i), len, images, spec));
    }
    return out;
}

}  // namespace docpack
