#pragma once

// Document model and the interchange-record codec, plus the two context
// renderings (interleaved text-image and one-image-per-page).

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "docpack/error.hpp"

namespace docpack {

using json = nlohmann::json;

inline constexpr std::string_view kImageMarker = "<image>";

enum class Source { scihub, arxiv, openreview, other };

inline std::string_view to_string(Source s) {
    switch (s) {
        case Source::scihub: return "scihub";
        case Source::arxiv: return "arxiv";
        case Source::openreview: return "openreview";
        case Source::other: return "other";
    }
    return "other";
}

inline std::optional<Source> parse_source(std::string_view s) {
    if (s == "scihub") return Source::scihub;
    if (s == "arxiv") return Source::arxiv;
    if (s == "openreview") return Source::openreview;
    if (s == "other") return Source::other;
    return std::nullopt;
}

struct ImageRef {
    std::string uri;
    std::uint32_t width_px = 1;
    std::uint32_t height_px = 1;

    bool operator==(const ImageRef&) const = default;
};

// A figure or table: both are carried as images with a caption.
struct FigureItem {
    std::string id;
    ImageRef image;
    std::string caption;
    // Index of the section an unreferenced figure belongs to; unset means the
    // last section.
    std::optional<std::size_t> section;

    bool operator==(const FigureItem&) const = default;
};

using TableItem = FigureItem;

struct Segment {
    enum class Kind { text, image };

    Kind kind = Kind::text;
    std::string text;
    ImageRef image;
    // Figure or table id for image segments that came from a reference.
    std::string figure_id;

    static Segment make_text(std::string t) {
        Segment s;
        s.kind = Kind::text;
        s.text = std::move(t);
        return s;
    }

    static Segment make_image(ImageRef img, std::string figure_id = {}) {
        Segment s;
        s.kind = Kind::image;
        s.image = std::move(img);
        s.figure_id = std::move(figure_id);
        return s;
    }

    bool is_text() const noexcept { return kind == Kind::text; }
    bool is_image() const noexcept { return kind == Kind::image; }

    bool operator==(const Segment&) const = default;
};

struct Section {
    std::string heading;
    std::vector<Segment> body;

    bool operator==(const Section&) const = default;
};

struct ReviewThread {
    std::string review;
    std::optional<std::string> reply;

    bool operator==(const ReviewThread&) const = default;
};

struct Document {
    std::string id;
    Source source = Source::other;
    std::optional<std::string> title;
    std::optional<std::string> abstract;
    std::vector<Section> sections;
    std::vector<FigureItem> figures;
    std::vector<TableItem> tables;
    std::vector<ReviewThread> reviews;
    std::string language = "en";
    // Page manifest for the multi-image rendering, in page order.
    std::vector<ImageRef> pages;

    const FigureItem* find_figure(std::string_view fid) const {
        for (const auto& f : figures)
            if (f.id == fid) return &f;
        for (const auto& t : tables)
            if (t.id == fid) return &t;
        return nullptr;
    }

    bool operator==(const Document&) const = default;
};

struct InterleavedDoc {
    std::vector<Segment> segments;

    std::size_t image_count() const {
        return static_cast<std::size_t>(
            std::count_if(segments.begin(), segments.end(), [](const Segment& s) { return s.is_image(); }));
    }

    bool operator==(const InterleavedDoc&) const = default;
};

struct MultiImageDoc {
    std::vector<ImageRef> pages;

    bool operator==(const MultiImageDoc&) const = default;
};

// Text items of a section joined by a single newline; images are skipped.
inline std::string section_text(const Section& sec) {
    std::string out;
    bool first = true;
    for (const auto& seg : sec.body) {
        if (!seg.is_text()) continue;
        if (!first) out += '\n';
        out += seg.text;
        first = false;
    }
    return out;
}

namespace detail {

inline const json& require(const json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) throw SchemaViolation(path.empty() ? key : path + "." + key);
    return *it;
}

inline std::string require_string(const json& obj, const char* key, const std::string& path = {}) {
    const auto& v = require(obj, key, path);
    if (!v.is_string()) throw SchemaViolation(path.empty() ? key : path + "." + key);
    return v.get<std::string>();
}

inline std::optional<std::string> optional_string(const json& obj, const char* key, const std::string& path = {}) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw SchemaViolation(path.empty() ? key : path + "." + key);
    return it->get<std::string>();
}

inline std::uint32_t require_dimension(const json& obj, const char* key, const std::string& path) {
    const auto& v = require(obj, key, path);
    if (!v.is_number_integer() || v.get<std::int64_t>() < 1 || v.get<std::int64_t>() > UINT32_MAX)
        throw SchemaViolation(path + "." + key);
    return static_cast<std::uint32_t>(v.get<std::int64_t>());
}

inline const json& require_array(const json& obj, const char* key, const std::string& path = {}) {
    const auto& v = require(obj, key, path);
    if (!v.is_array()) throw SchemaViolation(path.empty() ? key : path + "." + key);
    return v;
}

inline ImageRef parse_image_ref(const json& j, const std::string& path) {
    if (!j.is_object()) throw SchemaViolation(path);
    ImageRef r;
    r.uri = require_string(j, "uri", path);
    r.width_px = require_dimension(j, "width", path);
    r.height_px = require_dimension(j, "height", path);
    return r;
}

inline std::vector<FigureItem> parse_figures(const json& arr, const std::string& name) {
    std::vector<FigureItem> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = name + "[" + std::to_string(i) + "]";
        const auto& j = arr[i];
        if (!j.is_object()) throw SchemaViolation(path);
        FigureItem f;
        f.id = require_string(j, "id", path);
        f.image = parse_image_ref(j, path);
        f.caption = optional_string(j, "caption", path).value_or("");
        if (auto it = j.find("section"); it != j.end() && !it->is_null()) {
            if (!it->is_number_unsigned()) throw SchemaViolation(path + ".section");
            f.section = it->get<std::size_t>();
        }
        out.push_back(std::move(f));
    }
    return out;
}

inline json image_ref_json(const ImageRef& r) {
    return json{{"uri", r.uri}, {"width", r.width_px}, {"height", r.height_px}};
}

inline json figures_json(const std::vector<FigureItem>& items) {
    json arr = json::array();
    for (const auto& f : items) {
        json j = image_ref_json(f.image);
        j["id"] = f.id;
        j["caption"] = f.caption;
        if (f.section) j["section"] = *f.section;
        arr.push_back(std::move(j));
    }
    return arr;
}

}  // namespace detail

// Maps one interchange record onto a Document. Unknown fields are ignored.
inline Document parse_document(const json& rec) {
    using namespace detail;
    if (!rec.is_object()) throw MalformedRecord("record is not a JSON object");

    Document doc;
    doc.id = require_string(rec, "id");
    if (doc.id.empty()) throw SchemaViolation("id");
    auto src = parse_source(require_string(rec, "source"));
    if (!src) throw SchemaViolation("source");
    doc.source = *src;
    doc.title = optional_string(rec, "title");
    doc.abstract = optional_string(rec, "abstract");
    doc.language = optional_string(rec, "language").value_or("en");

    // Figures first so section references can be resolved.
    doc.figures = parse_figures(require_array(rec, "figures"), "figures");
    doc.tables = parse_figures(require_array(rec, "tables"), "tables");

    const auto& secs = require_array(rec, "sections");
    for (std::size_t i = 0; i < secs.size(); ++i) {
        const std::string path = "sections[" + std::to_string(i) + "]";
        const auto& js = secs[i];
        if (!js.is_object()) throw SchemaViolation(path);
        Section sec;
        sec.heading = require_string(js, "heading", path);
        const auto& body = require_array(js, "body", path);
        if (body.empty()) throw SchemaViolation(path + ".body");
        for (std::size_t k = 0; k < body.size(); ++k) {
            const std::string item_path = path + ".body[" + std::to_string(k) + "]";
            const auto& item = body[k];
            if (!item.is_object()) throw SchemaViolation(item_path);
            const bool has_t = item.contains("t");
            const bool has_img = item.contains("img");
            if (has_t == has_img) throw SchemaViolation(item_path);
            if (has_t) {
                sec.body.push_back(Segment::make_text(require_string(item, "t", item_path)));
            } else {
                auto fid = require_string(item, "img", item_path);
                const FigureItem* fig = doc.find_figure(fid);
                if (!fig) throw DanglingImageRef(fid);
                sec.body.push_back(Segment::make_image(fig->image, fid));
            }
        }
        doc.sections.push_back(std::move(sec));
    }

    for (const auto* list : {&doc.figures, &doc.tables})
        for (const auto& f : *list)
            if (f.section && *f.section >= doc.sections.size())
                throw SchemaViolation((list == &doc.figures ? "figures." : "tables.") + f.id + ".section");

    if (auto it = rec.find("reviews"); it != rec.end() && !it->is_null()) {
        if (!it->is_array()) throw SchemaViolation("reviews");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const std::string path = "reviews[" + std::to_string(i) + "]";
            const auto& jr = (*it)[i];
            if (!jr.is_object()) throw SchemaViolation(path);
            ReviewThread t;
            t.review = require_string(jr, "review", path);
            if (t.review.empty()) throw SchemaViolation(path + ".review");
            t.reply = optional_string(jr, "reply", path);
            doc.reviews.push_back(std::move(t));
        }
    }

    if (auto it = rec.find("pages"); it != rec.end() && !it->is_null()) {
        if (!it->is_array()) throw SchemaViolation("pages");
        for (std::size_t i = 0; i < it->size(); ++i)
            doc.pages.push_back(parse_image_ref((*it)[i], "pages[" + std::to_string(i) + "]"));
    }
    return doc;
}

inline Document parse_document(std::string_view line) {
    json rec;
    try {
        rec = json::parse(line);
    } catch (const json::parse_error& e) {
        throw MalformedRecord(e.what());
    }
    return parse_document(rec);
}

inline json serialize_document(const Document& doc) {
    json j;
    j["id"] = doc.id;
    j["source"] = std::string(to_string(doc.source));
    if (doc.title) j["title"] = *doc.title;
    if (doc.abstract) j["abstract"] = *doc.abstract;
    j["language"] = doc.language;
    j["figures"] = detail::figures_json(doc.figures);
    j["tables"] = detail::figures_json(doc.tables);
    json secs = json::array();
    for (const auto& sec : doc.sections) {
        json body = json::array();
        for (const auto& seg : sec.body) {
            if (seg.is_text())
                body.push_back(json{{"t", seg.text}});
            else
                body.push_back(json{{"img", seg.figure_id}});
        }
        secs.push_back(json{{"heading", sec.heading}, {"body", std::move(body)}});
    }
    j["sections"] = std::move(secs);
    if (!doc.reviews.empty()) {
        json revs = json::array();
        for (const auto& r : doc.reviews) {
            json jr{{"review", r.review}};
            if (r.reply) jr["reply"] = *r.reply;
            revs.push_back(std::move(jr));
        }
        j["reviews"] = std::move(revs);
    }
    if (!doc.pages.empty()) {
        json pages = json::array();
        for (const auto& p : doc.pages) pages.push_back(detail::image_ref_json(p));
        j["pages"] = std::move(pages);
    }
    return j;
}

// Appends a segment, merging it into a preceding text segment with "\n".
inline void append_segment(std::vector<Segment>& out, Segment seg) {
    if (seg.is_text() && !out.empty() && out.back().is_text()) {
        out.back().text += '\n';
        out.back().text += seg.text;
        return;
    }
    out.push_back(std::move(seg));
}

// Section bodies in order with every figure/table inlined at its reference
// and its caption as the following text. Figures that are never referenced go
// after their declared section (or the last one).
inline InterleavedDoc to_interleaved(const Document& doc, std::span<const std::size_t> section_indices) {
    std::unordered_map<std::string, bool> captioned;
    for (const auto& sec : doc.sections)
        for (const auto& seg : sec.body)
            if (seg.is_image()) captioned.emplace(seg.figure_id, false);

    auto inline_figure = [&](std::vector<Segment>& out, const FigureItem& fig) {
        append_segment(out, Segment::make_image(fig.image, fig.id));
        if (!fig.caption.empty()) append_segment(out, Segment::make_text(fig.caption));
    };

    InterleavedDoc out;
    const std::size_t last = doc.sections.empty() ? 0 : doc.sections.size() - 1;
    for (std::size_t idx : section_indices) {
        const auto& sec = doc.sections.at(idx);
        for (const auto& seg : sec.body) {
            if (seg.is_text()) {
                append_segment(out.segments, seg);
                continue;
            }
            const FigureItem* fig = doc.find_figure(seg.figure_id);
            auto it = captioned.find(seg.figure_id);
            if (fig && it != captioned.end() && !it->second) {
                inline_figure(out.segments, *fig);
                it->second = true;
            } else {
                append_segment(out.segments, seg);
            }
        }
        for (const auto* list : {&doc.figures, &doc.tables})
            for (const auto& fig : *list)
                if (!captioned.contains(fig.id) && fig.section.value_or(last) == idx)
                    inline_figure(out.segments, fig);
    }
    return out;
}

inline InterleavedDoc to_interleaved(const Document& doc) {
    std::vector<std::size_t> all(doc.sections.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return to_interleaved(doc, all);
}

inline MultiImageDoc to_multi_image(const Document& /*doc*/, std::vector<ImageRef> manifest) {
    if (manifest.empty()) throw EmptyManifest();
    return MultiImageDoc{std::move(manifest)};
}

inline MultiImageDoc to_multi_image(const Document& doc) { return to_multi_image(doc, doc.pages); }

// Text verbatim, each image as the literal marker, joined with "\n".
inline std::string render_context(const InterleavedDoc& d) {
    std::string out;
    for (std::size_t i = 0; i < d.segments.size(); ++i) {
        if (i) out += '\n';
        const auto& s = d.segments[i];
        if (s.is_text())
            out += s.text;
        else
            out += kImageMarker;
    }
    return out;
}

inline std::string render_context(const MultiImageDoc& d) {
    std::string out;
    for (std::size_t i = 0; i < d.pages.size(); ++i) {
        if (i) out += '\n';
        out += kImageMarker;
    }
    return out;
}

}  // namespace docpack
