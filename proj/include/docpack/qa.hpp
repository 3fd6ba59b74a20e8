#pragma once

// Conversation construction from documents and the conversation renderer.

#include <cctype>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "docpack/error.hpp"
#include "docpack/ingest.hpp"
#include "docpack/templates.hpp"

namespace docpack {

struct QAPair {
    std::string question;
    std::string answer;
    Task task = Task::ntp;
    bool generated_by_model = false;

    bool operator==(const QAPair&) const = default;
};

enum class ContextFormat { interleaved, multi_image };

inline std::string_view to_string(ContextFormat f) {
    return f == ContextFormat::interleaved ? "interleaved" : "multi_image";
}

using Context = std::variant<InterleavedDoc, MultiImageDoc>;

struct Conversation {
    std::string doc_id;
    Context context;
    std::vector<QAPair> turns;

    bool multi_turn() const noexcept { return turns.size() > 1; }
    ContextFormat context_format() const noexcept {
        return std::holds_alternative<InterleavedDoc>(context) ? ContextFormat::interleaved
                                                               : ContextFormat::multi_image;
    }
    bool is_ntp() const noexcept { return turns.size() == 1 && turns.front().task == Task::ntp; }

    bool operator==(const Conversation&) const = default;
};

class MissingField : public Error {
public:
    MissingField(Task task, std::string field)
        : Error(ErrorCategory::parse,
                "missing field for " + std::string(to_string(task)) + ": " + field),
          task_(task),
          field_(std::move(field)) {}

    Task task() const noexcept { return task_; }
    const std::string& field() const noexcept { return field_; }

private:
    Task task_;
    std::string field_;
};

// Answers this toolkit cannot derive from the document itself.
struct ExternalAnswers {
    std::optional<std::string> translation;
};

struct TaskBuild {
    std::vector<Conversation> conversations;
    std::vector<MissingField> skipped;
};

namespace detail {

// First word of a heading, lowercased, after any numbering such as "3",
// "2.1." or "IV.".
inline std::string heading_keyword(std::string_view heading) {
    static const std::regex numbering(R"(^\s*(\d+(\.\d+)*\.?|[IVXLCDMivxlcdm]+[.)]|[A-Za-z][.)])\s+)");
    std::string h(heading);
    std::smatch m;
    if (std::regex_search(h, m, numbering)) h = h.substr(static_cast<std::size_t>(m.length(0)));
    std::size_t i = 0;
    while (i < h.size() && !std::isalpha(static_cast<unsigned char>(h[i]))) ++i;
    std::string word;
    while (i < h.size() && std::isalpha(static_cast<unsigned char>(h[i])))
        word += static_cast<char>(std::tolower(static_cast<unsigned char>(h[i++])));
    return word;
}

inline std::optional<std::size_t> find_section(const Document& doc, std::initializer_list<std::string_view> keys) {
    for (std::size_t i = 0; i < doc.sections.size(); ++i) {
        const auto kw = heading_keyword(doc.sections[i].heading);
        for (auto k : keys)
            if (kw == k) return i;
    }
    return std::nullopt;
}

inline std::vector<std::size_t> sections_except(const Document& doc, std::optional<std::size_t> skip) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < doc.sections.size(); ++i)
        if (!skip || *skip != i) idx.push_back(i);
    return idx;
}

inline InterleavedDoc with_abstract(const Document& doc, InterleavedDoc body) {
    if (!doc.abstract || doc.abstract->empty()) return body;
    InterleavedDoc out;
    out.segments.push_back(Segment::make_text(*doc.abstract));
    for (auto& s : body.segments) append_segment(out.segments, std::move(s));
    return out;
}

// Nearest text item before the first reference to `fid`, else the nearest after.
inline std::string relative_text(const Document& doc, std::string_view fid) {
    for (const auto& sec : doc.sections) {
        for (std::size_t k = 0; k < sec.body.size(); ++k) {
            if (!sec.body[k].is_image() || sec.body[k].figure_id != fid) continue;
            for (std::size_t j = k; j-- > 0;)
                if (sec.body[j].is_text()) return sec.body[j].text;
            for (std::size_t j = k + 1; j < sec.body.size(); ++j)
                if (sec.body[j].is_text()) return sec.body[j].text;
            return {};
        }
    }
    return {};
}

}  // namespace detail

// Abstract followed by every section: the context for whole-paper tasks.
inline InterleavedDoc paper_context(const Document& doc) {
    return detail::with_abstract(doc, to_interleaved(doc));
}

inline std::optional<std::size_t> experiments_section(const Document& doc) {
    return detail::find_section(doc, {"experiment", "experiments", "evaluation"});
}

namespace detail {

inline Conversation build_abstract_writing(const Document& doc, const Templates& tpl) {
    if (!doc.abstract || doc.abstract->empty()) throw MissingField(Task::abstract_writing, "abstract");
    return Conversation{doc.id, to_interleaved(doc),
                        {QAPair{tpl.abstract_writing, *doc.abstract, Task::abstract_writing, false}}};
}

inline Conversation build_paper_titling(const Document& doc, const Templates& tpl) {
    if (!doc.title || doc.title->empty()) throw MissingField(Task::paper_titling, "title");
    std::optional<std::size_t> intro = find_section(doc, {"introduction"});
    if (!intro && !doc.sections.empty()) intro = 0;
    const bool has_abstract = doc.abstract && !doc.abstract->empty();
    if (!has_abstract && !intro) throw MissingField(Task::paper_titling, "abstract");
    InterleavedDoc body;
    if (intro) {
        const std::size_t only[] = {*intro};
        body = to_interleaved(doc, only);
    }
    return Conversation{doc.id, with_abstract(doc, std::move(body)),
                        {QAPair{tpl.paper_titling, *doc.title, Task::paper_titling, false}}};
}

inline Conversation build_caption_writing(const Document& doc, const Templates& tpl) {
    Conversation conv;
    conv.doc_id = doc.id;
    InterleavedDoc ctx;
    std::size_t index = 0;
    for (const auto* list : {&doc.figures, &doc.tables}) {
        for (const auto& fig : *list) {
            if (fig.caption.empty()) continue;
            ++index;
            ctx.segments.push_back(Segment::make_image(fig.image, fig.id));
            auto rel = relative_text(doc, fig.id);
            if (!rel.empty()) ctx.segments.push_back(Segment::make_text(std::move(rel)));
            conv.turns.push_back(QAPair{substitute(tpl.caption_writing, "{index}", std::to_string(index)),
                                        fig.caption, Task::caption_writing, false});
        }
    }
    if (conv.turns.empty()) throw MissingField(Task::caption_writing, "figures");
    conv.context = std::move(ctx);
    return conv;
}

inline Conversation build_experiment_writing(const Document& doc, const Templates& tpl) {
    auto exp = experiments_section(doc);
    if (!exp) throw MissingField(Task::experiment_writing, "experiments");
    auto answer = section_text(doc.sections[*exp]);
    if (answer.empty()) throw MissingField(Task::experiment_writing, "experiments");
    auto ctx = with_abstract(doc, to_interleaved(doc, sections_except(doc, exp)));
    return Conversation{doc.id, std::move(ctx),
                        {QAPair{tpl.experiment_writing, std::move(answer), Task::experiment_writing, false}}};
}

inline Conversation build_translation(const Document& doc, const Templates& tpl, const ExternalAnswers& ext) {
    if (!experiments_section(doc)) throw MissingField(Task::translation, "experiments");
    if (!ext.translation || ext.translation->empty()) throw MissingField(Task::translation, "translation");
    return Conversation{doc.id, paper_context(doc),
                        {QAPair{tpl.translation, *ext.translation, Task::translation, false}}};
}

}  // namespace detail

// One conversation per satisfiable structured task, in task order. Requested
// tasks whose prerequisites are absent are reported in `skipped`.
inline TaskBuild build_structured_tasks(const Document& doc, const TaskSet& tasks, const Templates& tpl = {},
                                        const ExternalAnswers& ext = {}) {
    TaskBuild out;
    for (Task t : kStructuredTasks) {
        if (!tasks.contains(t)) continue;
        try {
            switch (t) {
                case Task::abstract_writing: out.conversations.push_back(detail::build_abstract_writing(doc, tpl)); break;
                case Task::paper_titling: out.conversations.push_back(detail::build_paper_titling(doc, tpl)); break;
                case Task::caption_writing: out.conversations.push_back(detail::build_caption_writing(doc, tpl)); break;
                case Task::experiment_writing: out.conversations.push_back(detail::build_experiment_writing(doc, tpl)); break;
                case Task::translation: out.conversations.push_back(detail::build_translation(doc, tpl, ext)); break;
                default: break;
            }
        } catch (const MissingField& e) {
            out.skipped.push_back(e);
        }
    }
    return out;
}

// Same as build_structured_tasks but throws the first MissingField.
inline std::vector<Conversation> build_structured_tasks_strict(const Document& doc, const TaskSet& tasks,
                                                               const Templates& tpl = {},
                                                               const ExternalAnswers& ext = {}) {
    auto built = build_structured_tasks(doc, tasks, tpl, ext);
    if (!built.skipped.empty()) throw built.skipped.front();
    return std::move(built.conversations);
}

inline std::vector<Conversation> build_review_reply(const Document& doc, const Templates& tpl = {}) {
    if (doc.reviews.empty()) throw NoReviews(doc.id);
    std::vector<Conversation> out;
    const auto ctx = paper_context(doc);
    for (const auto& thread : doc.reviews) {
        out.push_back(Conversation{doc.id, ctx, {QAPair{tpl.review_writing, thread.review, Task::review_writing, false}}});
        if (thread.reply && !thread.reply->empty())
            out.push_back(Conversation{doc.id, ctx,
                                       {QAPair{substitute(tpl.reply_writing, "{review}", thread.review),
                                               *thread.reply, Task::reply_writing, false}}});
    }
    return out;
}

inline Conversation attach_external_qa(const Document& doc, const std::vector<std::pair<std::string, std::string>>& qa) {
    if (qa.empty()) throw EmptyQAList();
    Conversation conv{doc.id, paper_context(doc), {}};
    for (std::size_t i = 0; i < qa.size(); ++i) {
        if (qa[i].first.empty() || qa[i].second.empty())
            throw SchemaViolation("qa[" + std::to_string(i) + "]");
        conv.turns.push_back(QAPair{qa[i].first, qa[i].second, Task::external_generated, true});
    }
    return conv;
}

// Plain-text fallback: the whole paper as a single next-token-prediction turn.
inline Conversation build_ntp(const Document& doc) {
    auto ctx = paper_context(doc);
    auto text = render_context(ctx);
    return Conversation{doc.id, std::move(ctx), {QAPair{"", std::move(text), Task::ntp, false}}};
}

// Prompt for an external QA generator with the paper expanded in place.
inline std::string external_generation_prompt(const Document& doc, const Templates& tpl = {}) {
    return substitute(tpl.external_prompt, "{paper}", render_context(paper_context(doc)));
}

enum class Role : std::uint8_t { context = 0, question = 1, answer = 2 };

inline std::string_view to_string(Role r) {
    switch (r) {
        case Role::context: return "context";
        case Role::question: return "question";
        case Role::answer: return "answer";
    }
    return "context";
}

struct RenderedPiece {
    Role role = Role::context;
    bool is_image = false;
    std::string text;
    ImageRef image;
};

namespace detail {

inline void push_text(std::vector<RenderedPiece>& out, Role role, std::string_view text) {
    if (text.empty()) return;
    if (!out.empty() && !out.back().is_image && out.back().role == role) {
        out.back().text += text;
        return;
    }
    out.push_back(RenderedPiece{role, false, std::string(text), {}});
}

inline void push_context(std::vector<RenderedPiece>& out, const Context& ctx, Role role) {
    auto image = [&](const ImageRef& img) { out.push_back(RenderedPiece{role, true, {}, img}); };
    if (const auto* inter = std::get_if<InterleavedDoc>(&ctx)) {
        for (std::size_t i = 0; i < inter->segments.size(); ++i) {
            if (i) push_text(out, role, "\n");
            const auto& s = inter->segments[i];
            if (s.is_text())
                push_text(out, role, s.text);
            else
                image(s.image);
        }
    } else {
        const auto& pages = std::get<MultiImageDoc>(ctx).pages;
        for (std::size_t i = 0; i < pages.size(); ++i) {
            if (i) push_text(out, role, "\n");
            image(pages[i]);
        }
    }
}

}  // namespace detail

// The conversation as role-tagged pieces; images stay separate pieces.
inline std::vector<RenderedPiece> render_pieces(const Conversation& conv, const ConversationTemplate& tpl = {}) {
    std::vector<RenderedPiece> out;
    if (conv.is_ntp()) {
        detail::push_context(out, conv.context, Role::answer);
        return out;
    }
    for (std::size_t i = 0; i < conv.turns.size(); ++i) {
        const auto& turn = conv.turns[i];
        if (i == 0) {
            detail::push_text(out, Role::context, tpl.prefix);
            detail::push_context(out, conv.context, Role::context);
            detail::push_text(out, Role::question, tpl.question_lead);
        } else {
            detail::push_text(out, Role::question, tpl.turn_separator);
        }
        detail::push_text(out, Role::question, turn.question);
        detail::push_text(out, Role::question, tpl.answer_lead);
        detail::push_text(out, Role::answer, turn.answer);
    }
    return out;
}

inline std::string render_conversation(const Conversation& conv, const ConversationTemplate& tpl = {}) {
    std::string out;
    for (const auto& p : render_pieces(conv, tpl)) {
        if (p.is_image)
            out += kImageMarker;
        else
            out += p.text;
    }
    return out;
}

inline std::size_t context_image_count(const Context& ctx) {
    if (const auto* inter = std::get_if<InterleavedDoc>(&ctx)) return inter->image_count();
    return std::get<MultiImageDoc>(ctx).pages.size();
}

// JSON-lines conversation record.
inline json serialize_conversation(const Conversation& conv) {
    json ctx = json::array();
    if (const auto* inter = std::get_if<InterleavedDoc>(&conv.context)) {
        for (const auto& s : inter->segments) {
            if (s.is_text())
                ctx.push_back(json{{"t", s.text}});
            else
            {
                json item{{"img", detail::image_ref_json(s.image)}};
                if (!s.figure_id.empty()) item["figure"] = s.figure_id;
                ctx.push_back(std::move(item));
            }
        }
    } else {
        for (const auto& p : std::get<MultiImageDoc>(conv.context).pages) ctx.push_back(detail::image_ref_json(p));
    }
    json turns = json::array();
    for (const auto& t : conv.turns)
        turns.push_back(json{{"question", t.question},
                             {"answer", t.answer},
                             {"task", std::string(to_string(t.task))},
                             {"generated_by_model", t.generated_by_model}});
    return json{{"doc_id", conv.doc_id},
                {"context_format", std::string(to_string(conv.context_format()))},
                {"context", std::move(ctx)},
                {"turns", std::move(turns)},
                {"multi_turn", conv.multi_turn()}};
}

inline Conversation parse_conversation(const json& j) {
    using namespace detail;
    if (!j.is_object()) throw MalformedRecord("conversation is not a JSON object");
    Conversation conv;
    conv.doc_id = require_string(j, "doc_id");
    const auto fmt = require_string(j, "context_format");
    const auto& ctx = require_array(j, "context");
    if (fmt == "interleaved") {
        InterleavedDoc d;
        for (std::size_t i = 0; i < ctx.size(); ++i) {
            const std::string path = "context[" + std::to_string(i) + "]";
            const auto& item = ctx[i];
            if (!item.is_object()) throw SchemaViolation(path);
            if (item.contains("t"))
                d.segments.push_back(Segment::make_text(require_string(item, "t", path)));
            else
                d.segments.push_back(Segment::make_image(parse_image_ref(require(item, "img", path), path + ".img"),
                                                         item.contains("figure")
                                                             ? require_string(item, "figure", path)
                                                             : std::string{}));
        }
        conv.context = std::move(d);
    } else if (fmt == "multi_image") {
        MultiImageDoc d;
        for (std::size_t i = 0; i < ctx.size(); ++i)
            d.pages.push_back(parse_image_ref(ctx[i], "context[" + std::to_string(i) + "]"));
        conv.context = std::move(d);
    } else {
        throw SchemaViolation("context_format");
    }
    const auto& turns = require_array(j, "turns");
    if (turns.empty()) throw SchemaViolation("turns");
    for (std::size_t i = 0; i < turns.size(); ++i) {
        const std::string path = "turns[" + std::to_string(i) + "]";
        const auto& jt = turns[i];
        if (!jt.is_object()) throw SchemaViolation(path);
        QAPair qa;
        qa.question = require_string(jt, "question", path);
        qa.answer = require_string(jt, "answer", path);
        auto task = parse_task(require_string(jt, "task", path));
        if (!task) throw SchemaViolation(path + ".task");
        qa.task = *task;
        const auto& gen = require(jt, "generated_by_model", path);
        if (!gen.is_boolean()) throw SchemaViolation(path + ".generated_by_model");
        qa.generated_by_model = gen.get<bool>();
        conv.turns.push_back(std::move(qa));
    }
    return conv;
}

}  // namespace docpack
