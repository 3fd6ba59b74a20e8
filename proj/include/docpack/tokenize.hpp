#pragma once

// Token accounting: a reference text tokenizer, the external-tokenizer
// process contract, and the dynamic tiling model for image cost.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <unistd.h>

#include "docpack/error.hpp"
#include "docpack/qa.hpp"
#include "docpack/sample.hpp"

namespace docpack {

struct TokenizerSpec {
    enum class Kind { reference, external };

    Kind kind = Kind::reference;
    std::optional<std::string> external_vocab_uri;
    // Executable reading text on stdin and printing one integer count. The
    // vocabulary uri is passed as its only argument.
    std::optional<std::string> external_command;

    void validate() const {
        if (kind == Kind::external && (!external_vocab_uri || !external_command))
            throw ConfigError("external tokenizer needs both a vocabulary uri and a command");
    }
};

struct TileConfig {
    std::uint32_t tile_resolution_px = 448;
    std::uint32_t max_tiles = 24;
    std::uint32_t tokens_per_tile = 256;
    bool use_thumbnail = true;

    void validate() const {
        if (tile_resolution_px < 1 || max_tiles < 1 || tokens_per_tile < 1)
            throw ConfigError("tile_resolution_px, max_tiles and tokens_per_tile must be >= 1");
    }
};

namespace utf8 {

// Decodes one code point starting at `i`; returns nullopt on malformed input.
inline std::optional<char32_t> decode(std::string_view s, std::size_t& i) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    if (b0 < 0x80) {
        ++i;
        return b0;
    }
    int len;
    char32_t cp;
    if ((b0 & 0xE0) == 0xC0) { len = 2; cp = b0 & 0x1F; }
    else if ((b0 & 0xF0) == 0xE0) { len = 3; cp = b0 & 0x0F; }
    else if ((b0 & 0xF8) == 0xF0) { len = 4; cp = b0 & 0x07; }
    else return std::nullopt;
    if (i + len > s.size()) return std::nullopt;
    for (int k = 1; k < len; ++k) {
        const auto b = static_cast<unsigned char>(s[i + k]);
        if ((b & 0xC0) != 0x80) return std::nullopt;
        cp = (cp << 6) | (b & 0x3F);
    }
    // Overlong forms, surrogates, out of range.
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return std::nullopt;
    i += len;
    return cp;
}

inline bool is_space(char32_t c) {
    switch (c) {
        case U' ': case U'\t': case U'\n': case U'\v': case U'\f': case U'\r':
        case 0x85: case 0xA0: case 0x1680: case 0x2028: case 0x2029:
        case 0x202F: case 0x205F: case 0x3000:
            return true;
        default:
            return c >= 0x2000 && c <= 0x200A;
    }
}

}  // namespace utf8

inline std::uint64_t reference_run_tokens(std::uint64_t run_chars) { return (run_chars + 5) / 6; }

// Reference rule: each maximal run of non-whitespace code points of length L
// costs ceil(L / 6) tokens.
inline std::uint64_t count_reference_tokens(std::string_view text) {
    std::uint64_t total = 0, run = 0;
    for (std::size_t i = 0; i < text.size();) {
        const std::size_t at = i;
        auto cp = utf8::decode(text, i);
        if (!cp) throw InvalidEncoding(at);
        if (utf8::is_space(*cp)) {
            total += reference_run_tokens(run);
            run = 0;
        } else {
            ++run;
        }
    }
    return total + reference_run_tokens(run);
}

inline void validate_utf8(std::string_view text) {
    for (std::size_t i = 0; i < text.size();) {
        const std::size_t at = i;
        if (!utf8::decode(text, i)) throw InvalidEncoding(at);
    }
}

namespace detail {

inline std::string shell_quote(std::string_view s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    return out + "'";
}

inline std::uint64_t count_external_tokens(std::string_view text, const TokenizerSpec& spec) {
    spec.validate();
    char path[] = "/tmp/docpack-tok-XXXXXX";
    const int fd = ::mkstemp(path);
    if (fd < 0) throw IoError("cannot create temporary file for external tokenizer");
    ::close(fd);
    struct Cleanup {
        const char* p;
        ~Cleanup() { std::error_code ec; std::filesystem::remove(p, ec); }
    } cleanup{path};
    {
        std::ofstream out(path, std::ios::binary);
        out.write(text.data(), static_cast<std::streamsize>(text.size()));
        if (!out) throw IoError("cannot write temporary file for external tokenizer");
    }
    const std::string cmd = *spec.external_command + " " + shell_quote(*spec.external_vocab_uri) + " < " + path;
    FILE* pipe = ::popen(cmd.c_str(), "r");
    if (!pipe) throw IoError("cannot start external tokenizer: " + *spec.external_command);
    std::string output;
    char buf[256];
    while (std::size_t n = std::fread(buf, 1, sizeof buf, pipe)) output.append(buf, n);
    const int status = ::pclose(pipe);
    if (status != 0) throw IoError("external tokenizer exited with status " + std::to_string(status));
    std::size_t pos = 0;
    unsigned long long value = 0;
    try {
        value = std::stoull(output, &pos);
    } catch (const std::exception&) {
        throw IoError("external tokenizer printed no integer: '" + output + "'");
    }
    while (pos < output.size() && std::isspace(static_cast<unsigned char>(output[pos]))) ++pos;
    if (pos != output.size() || output.find('-') != std::string::npos)
        throw IoError("external tokenizer printed no integer: '" + output + "'");
    return value;
}

}  // namespace detail

inline std::uint64_t count_text_tokens(std::string_view text, const TokenizerSpec& spec = {}) {
    if (spec.kind == TokenizerSpec::Kind::reference) return count_reference_tokens(text);
    validate_utf8(text);
    return detail::count_external_tokens(text, spec);
}

struct TileGrid {
    std::uint32_t rows = 1;
    std::uint32_t cols = 1;

    std::uint32_t tiles() const noexcept { return rows * cols; }
    bool operator==(const TileGrid&) const = default;
};

// Grid whose column/row ratio is closest to the image aspect ratio. Among
// equally close grids the largest one is taken whose nominal pixel area is at
// most twice the image area; when none qualifies, the smallest. Comparisons
// are exact in integer arithmetic.
inline TileGrid select_tile_grid(std::uint32_t width_px, std::uint32_t height_px, const TileConfig& cfg) {
    using i128 = __int128;
    const i128 w = width_px, h = height_px;
    const i128 tile_area = static_cast<i128>(cfg.tile_resolution_px) * cfg.tile_resolution_px;
    const i128 image_area = w * h;

    TileGrid best{};
    // Distance |c/r - w/h| as the fraction num/den = |c*h - r*w| / (r*h).
    i128 best_num = -1, best_den = 1;
    bool best_fills = false;
    for (std::uint32_t r = 1; r <= cfg.max_tiles; ++r) {
        for (std::uint32_t c = 1; r * c <= cfg.max_tiles; ++c) {
            i128 num = static_cast<i128>(c) * h - static_cast<i128>(r) * w;
            if (num < 0) num = -num;
            const i128 den = static_cast<i128>(r) * h;
            const bool fills = 2 * image_area > tile_area * r * c;
            const TileGrid cand{r, c};
            if (best_num < 0) {
                best = cand; best_num = num; best_den = den; best_fills = fills;
                continue;
            }
            const i128 lhs = num * best_den, rhs = best_num * den;
            bool take = lhs < rhs;
            if (lhs == rhs) {
                const auto a = cand.tiles(), b = best.tiles();
                if (fills && a > b) take = true;          // larger grid the image can fill
                else if (!best_fills && a < b) take = true;  // otherwise the smallest
            }
            if (take) {
                best = cand; best_num = num; best_den = den; best_fills = fills;
            }
        }
    }
    return best;
}

inline std::uint32_t compute_tiles(std::uint32_t width_px, std::uint32_t height_px, const TileConfig& cfg = {}) {
    const auto g = select_tile_grid(width_px, height_px, cfg).tiles();
    return g + ((cfg.use_thumbnail && g > 1) ? 1u : 0u);
}

inline std::uint64_t image_tokens(const ImageRef& img, const TileConfig& cfg = {}) {
    return static_cast<std::uint64_t>(compute_tiles(img.width_px, img.height_px, cfg)) * cfg.tokens_per_tile;
}

struct MeasureOptions {
    // Upper bound on the token length of one text atom.
    std::uint32_t text_atom_tokens = 32;
};

namespace detail {

class AtomBuilder {
public:
    AtomBuilder(Sample& s, std::uint32_t max_text) : sample_(s), max_text_(max_text) {}

    void text(Role role, std::uint64_t tokens) {
        while (tokens > 0) {
            if (!open_ || open_role_ != role || open_len_ == max_text_) {
                close();
                open_ = true;
                open_role_ = role;
            }
            const auto take = static_cast<std::uint32_t>(std::min<std::uint64_t>(tokens, max_text_ - open_len_));
            open_len_ += take;
            tokens -= take;
        }
    }

    void image(Role role, std::uint64_t tokens) {
        close();
        sample_.push(Atom{AtomKind::image, role, static_cast<std::uint32_t>(tokens)});
    }

    void close() {
        if (open_ && open_len_ > 0) sample_.push(Atom{AtomKind::text, open_role_, open_len_});
        open_ = false;
        open_len_ = 0;
    }

private:
    Sample& sample_;
    std::uint32_t max_text_;
    bool open_ = false;
    Role open_role_ = Role::context;
    std::uint32_t open_len_ = 0;
};

}  // namespace detail

// Token cost of a conversation as a packable sample. With the reference
// tokenizer the text is counted as one stream (image markers excluded, an
// image ends a run) and each run's tokens are attributed to the role where
// the run starts. An external tokenizer is invoked once per rendered piece.
inline Sample measure_sample(const Conversation& conv, std::string id, const TokenizerSpec& spec = {},
                             const TileConfig& cfg = {}, const MeasureOptions& opt = {},
                             const ConversationTemplate& tpl = {}) {
    if (opt.text_atom_tokens < 1) throw ConfigError("text_atom_tokens must be >= 1");
    Sample s;
    s.id = std::move(id);
    detail::AtomBuilder atoms(s, opt.text_atom_tokens);
    const auto pieces = render_pieces(conv, tpl);

    if (spec.kind == TokenizerSpec::Kind::reference) {
        std::uint64_t run = 0;
        Role run_role = Role::context;
        auto end_run = [&] {
            if (run) atoms.text(run_role, reference_run_tokens(run));
            run = 0;
        };
        for (const auto& p : pieces) {
            if (p.is_image) {
                end_run();
                atoms.image(p.role, image_tokens(p.image, cfg));
                continue;
            }
            for (std::size_t i = 0; i < p.text.size();) {
                const std::size_t at = i;
                auto cp = utf8::decode(p.text, i);
                if (!cp) throw InvalidEncoding(at);
                if (utf8::is_space(*cp)) {
                    end_run();
                } else {
                    if (run == 0) run_role = p.role;
                    ++run;
                }
            }
        }
        end_run();
    } else {
        for (const auto& p : pieces) {
            if (p.is_image)
                atoms.image(p.role, image_tokens(p.image, cfg));
            else
                atoms.text(p.role, count_text_tokens(p.text, spec));
        }
    }
    atoms.close();
    return s;
}

inline Sample measure_sample(const Conversation& conv, const TokenizerSpec& spec = {}, const TileConfig& cfg = {}) {
    return measure_sample(conv, conv.doc_id, spec, cfg);
}

}  // namespace docpack
