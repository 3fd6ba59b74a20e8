#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "docpack/qa.hpp"

namespace docpack {

enum class AtomKind : std::uint8_t { text = 0, image = 1 };

// Smallest unit the packer moves: a run of text tokens or one whole image.
struct Atom {
    AtomKind kind = AtomKind::text;
    Role role = Role::context;
    std::uint32_t length = 0;

    bool is_image() const noexcept { return kind == AtomKind::image; }
    bool operator==(const Atom&) const = default;
    auto operator<=>(const Atom&) const = default;
};

// A sample, or one truncated part of a sample. `atom_offset` is the index of
// the first atom within the original sample.
struct Sample {
    std::string id;
    std::uint64_t n_tokens = 0;
    std::uint64_t n_text_tokens = 0;
    std::uint64_t n_image_tokens = 0;
    std::uint32_t n_images = 0;
    std::vector<Atom> payload;
    std::uint32_t atom_offset = 0;

    void push(const Atom& a) {
        payload.push_back(a);
        n_tokens += a.length;
        if (a.is_image()) {
            n_image_tokens += a.length;
            ++n_images;
        } else {
            n_text_tokens += a.length;
        }
    }

    bool operator==(const Sample&) const = default;
};

inline Sample make_sample(std::string id, const std::vector<Atom>& atoms) {
    Sample s;
    s.id = std::move(id);
    s.payload.reserve(atoms.size());
    for (const auto& a : atoms) s.push(a);
    return s;
}

}  // namespace docpack
