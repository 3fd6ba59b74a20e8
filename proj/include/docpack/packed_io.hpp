#pragma once

// Packed-dataset file codec (little-endian binary) and its JSON-lines debug
// rendering.
//
// File:   "DOCPACK1" | u32 version | u32 t_tok | u32 t_img | record*
// Record: u64 record_length (bytes that follow)
//         u32 n_tokens | u32 n_images | u32 pad_tokens | u32 k
//         k x (u32 id_len | id bytes | u32 atom_offset | u32 n_atoms)
//         i32 segment_ids[physical]   (pad = -1)
//         i32 positions[physical]     (pad = 0)
//         u8  role_labels[physical]   (pad = 255)
//         n_atoms x (u8 kind | u8 role | u32 length), sub-samples in order

#include <array>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "docpack/error.hpp"
#include "docpack/packer.hpp"

namespace docpack {

inline constexpr std::string_view kPackedMagic = "DOCPACK1";
inline constexpr std::uint32_t kPackedVersion = 1;

struct PackedFileHeader {
    std::uint32_t version = kPackedVersion;
    std::uint32_t t_tok = 0;
    std::uint32_t t_img = 0;

    bool operator==(const PackedFileHeader&) const = default;
};

namespace detail {

class ByteWriter {
public:
    void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
    void bytes(std::string_view s) { buf_.append(s); }
    const std::string& data() const noexcept { return buf_; }

private:
    std::string buf_;
};

class ByteReader {
public:
    explicit ByteReader(std::string_view data) : data_(data) {}

    std::uint8_t u8() { need(1); return static_cast<std::uint8_t>(data_[pos_++]); }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
        return v;
    }
    std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(data_.substr(pos_, n));
        pos_ += n;
        return s;
    }
    bool done() const noexcept { return pos_ == data_.size(); }

private:
    void need(std::size_t n) const {
        if (data_.size() - pos_ < n) throw MalformedRecord("packed record truncated");
    }
    std::string_view data_;
    std::size_t pos_ = 0;
};

inline std::uint32_t narrow32(std::uint64_t v, const char* what) {
    if (v > UINT32_MAX) throw IoError(std::string(what) + " does not fit the packed format");
    return static_cast<std::uint32_t>(v);
}

}  // namespace detail

inline void write_packed_header(std::ostream& out, const PackerConfig& cfg) {
    detail::ByteWriter w;
    w.bytes(kPackedMagic);
    w.u32(kPackedVersion);
    w.u32(cfg.t_tok);
    w.u32(cfg.t_img);
    out.write(w.data().data(), static_cast<std::streamsize>(w.data().size()));
}

inline std::string encode_packed_record(const PackedSample& p) {
    detail::ByteWriter w;
    w.u32(detail::narrow32(p.n_tokens, "n_tokens"));
    w.u32(p.n_images);
    w.u32(detail::narrow32(p.pad_tokens, "pad_tokens"));
    w.u32(detail::narrow32(p.subsamples.size(), "k"));
    for (const auto& sub : p.subsamples) {
        w.u32(detail::narrow32(sub.source_sample_id.size(), "id length"));
        w.bytes(sub.source_sample_id);
        w.u32(sub.atom_offset);
        w.u32(detail::narrow32(sub.atoms.size(), "n_atoms"));
    }
    for (auto id : p.segment_ids()) w.i32(id);
    for (std::uint64_t i = 0; i < p.pad_tokens; ++i) w.i32(kPadSegment);
    for (auto pos : p.positions()) w.i32(pos);
    for (std::uint64_t i = 0; i < p.pad_tokens; ++i) w.i32(0);
    for (auto r : p.role_labels()) w.u8(r);
    for (std::uint64_t i = 0; i < p.pad_tokens; ++i) w.u8(kPadRole);
    for (const auto& sub : p.subsamples)
        for (const auto& a : sub.atoms) {
            w.u8(static_cast<std::uint8_t>(a.kind));
            w.u8(static_cast<std::uint8_t>(a.role));
            w.u32(a.length);
        }
    detail::ByteWriter framed;
    framed.u64(w.data().size());
    framed.bytes(w.data());
    return framed.data();
}

inline void write_packed_record(std::ostream& out, const PackedSample& p) {
    const auto rec = encode_packed_record(p);
    out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
    if (!out) throw IoError("write failed");
}

// Decodes one record body (without its length prefix) and cross-checks the
// per-token arrays against the sub-sample table.
inline PackedSample decode_packed_record(std::string_view body) {
    detail::ByteReader r(body);
    PackedSample p;
    p.n_tokens = r.u32();
    p.n_images = r.u32();
    p.pad_tokens = r.u32();
    const std::uint32_t k = r.u32();
    std::vector<std::uint32_t> n_atoms(k);
    for (std::uint32_t i = 0; i < k; ++i) {
        SubSample sub;
        sub.source_sample_id = r.bytes(r.u32());
        sub.atom_offset = r.u32();
        n_atoms[i] = r.u32();
        p.subsamples.push_back(std::move(sub));
    }
    const std::uint64_t physical = p.n_tokens + p.pad_tokens;
    if (physical > body.size() / 9) throw MalformedRecord("packed record shorter than its token arrays");
    std::vector<std::int32_t> seg(physical), pos(physical);
    std::vector<std::uint8_t> roles(physical);
    for (auto& v : seg) v = r.i32();
    for (auto& v : pos) v = r.i32();
    for (auto& v : roles) v = r.u8();
    for (std::uint32_t i = 0; i < k; ++i) {
        auto& sub = p.subsamples[i];
        for (std::uint32_t a = 0; a < n_atoms[i]; ++a) {
            Atom atom;
            const auto kind = r.u8();
            const auto role = r.u8();
            if (kind > 1 || role > 2) throw MalformedRecord("bad atom descriptor");
            atom.kind = static_cast<AtomKind>(kind);
            atom.role = static_cast<Role>(role);
            atom.length = r.u32();
            sub.n_tokens += atom.length;
            sub.n_images += atom.is_image() ? 1 : 0;
            sub.atoms.push_back(atom);
        }
    }
    if (!r.done()) throw MalformedRecord("trailing bytes in packed record");

    std::uint64_t tokens = 0;
    std::uint32_t images = 0;
    for (const auto& sub : p.subsamples) {
        tokens += sub.n_tokens;
        images += sub.n_images;
    }
    if (tokens != p.n_tokens || images != p.n_images) throw MalformedRecord("record header disagrees with atoms");
    if (seg != attention_segments(p).segment_ids) throw MalformedRecord("segment ids disagree with sub-samples");
    auto expect_pos = p.positions();
    expect_pos.insert(expect_pos.end(), p.pad_tokens, 0);
    if (pos != expect_pos) throw MalformedRecord("positions disagree with sub-samples");
    auto expect_roles = p.role_labels();
    expect_roles.insert(expect_roles.end(), p.pad_tokens, kPadRole);
    if (roles != expect_roles) throw MalformedRecord("role labels disagree with atoms");
    return p;
}

struct PackedFile {
    PackedFileHeader header;
    std::vector<PackedSample> records;
};

inline PackedFile read_packed(std::istream& in) {
    PackedFile f;
    std::array<char, 20> head{};
    in.read(head.data(), head.size());
    if (in.gcount() != static_cast<std::streamsize>(head.size()) ||
        std::string_view(head.data(), kPackedMagic.size()) != kPackedMagic)
        throw MalformedRecord("not a packed dataset file");
    detail::ByteReader hr(std::string_view(head.data() + 8, 12));
    f.header.version = hr.u32();
    f.header.t_tok = hr.u32();
    f.header.t_img = hr.u32();
    if (f.header.version != kPackedVersion) throw MalformedRecord("unsupported packed version");
    for (;;) {
        std::array<char, 8> len_bytes{};
        in.read(len_bytes.data(), 8);
        if (in.gcount() == 0) break;
        if (in.gcount() != 8) throw MalformedRecord("packed record length truncated");
        std::uint64_t len = 0;
        for (int i = 0; i < 8; ++i) len |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(len_bytes[i])) << (8 * i);
        std::string body(len, '\0');
        in.read(body.data(), static_cast<std::streamsize>(len));
        if (static_cast<std::uint64_t>(in.gcount()) != len) throw MalformedRecord("packed record body truncated");
        f.records.push_back(decode_packed_record(body));
    }
    return f;
}

inline nlohmann::json packed_record_json(const PackedSample& p) {
    using nlohmann::json;
    json subs = json::array();
    json atoms = json::array();
    for (const auto& sub : p.subsamples) {
        subs.push_back(json{{"source_sample_id", sub.source_sample_id},
                            {"atom_offset", sub.atom_offset},
                            {"n_atoms", sub.atoms.size()}});
        for (const auto& a : sub.atoms)
            atoms.push_back(json{{"kind", a.is_image() ? "image" : "text"},
                                 {"role", std::string(to_string(a.role))},
                                 {"length", a.length}});
    }
    auto seg = attention_segments(p).segment_ids;
    auto pos = p.positions();
    pos.insert(pos.end(), p.pad_tokens, 0);
    auto roles = p.role_labels();
    roles.insert(roles.end(), p.pad_tokens, kPadRole);
    return json{{"record_length", encode_packed_record(p).size() - 8},
                {"n_tokens", p.n_tokens},
                {"n_images", p.n_images},
                {"pad_tokens", p.pad_tokens},
                {"k", p.subsamples.size()},
                {"subsamples", std::move(subs)},
                {"segment_ids", std::move(seg)},
                {"positions", std::move(pos)},
                {"role_labels", std::move(roles)},
                {"atoms", std::move(atoms)}};
}

}  // namespace docpack
