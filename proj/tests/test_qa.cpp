#include <string>

#include <gtest/gtest.h>

#include "docpack/qa.hpp"

using namespace docpack;

namespace {

Document paper() {
    return parse_document(json::parse(R"({
        "id": "p1", "source": "arxiv", "title": "Packing Matters",
        "abstract": "We study packing.",
        "sections": [
            {"heading": "1. Introduction", "body": [{"t": "Padding wastes compute."}, {"img": "f1"}, {"t": "See the figure."}]},
            {"heading": "2 Method", "body": [{"t": "Greedy buffers."}]},
            {"heading": "4 Experiments and Results", "body": [{"t": "Utilization rises."}, {"img": "t1"}]}
        ],
        "figures": [{"id": "f1", "uri": "f1.png", "width": 896, "height": 448, "caption": "Waste over time."}],
        "tables": [{"id": "t1", "uri": "t1.png", "width": 448, "height": 448, "caption": "Main results."}],
        "reviews": [{"review": "Solid work.", "reply": "Thanks."}, {"review": "Needs ablations.", "reply": "Added."}]
    })"));
}

std::size_t count(const std::string& hay, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

}  // namespace

TEST(StructuredTasks, AbstractWritingExcludesAbstract) {
    auto doc = paper();
    doc.abstract = "X";
    auto convs = build_structured_tasks_strict(doc, {Task::abstract_writing});
    ASSERT_EQ(convs.size(), 1u);
    EXPECT_EQ(convs[0].turns[0].answer, "X");
    EXPECT_EQ(convs[0].turns[0].task, Task::abstract_writing);
    EXPECT_FALSE(convs[0].turns[0].generated_by_model);
    EXPECT_EQ(render_context(std::get<InterleavedDoc>(convs[0].context)).find("X"), std::string::npos);
    EXPECT_NE(convs[0].turns[0].question.find("concise summary in the form of an abstract"), std::string::npos);
}

TEST(StructuredTasks, CaptionWritingNeedsFigures) {
    auto doc = paper();
    doc.figures.clear();
    doc.tables.clear();
    for (auto& s : doc.sections)
        std::erase_if(s.body, [](const Segment& seg) { return seg.is_image(); });
    auto built = build_structured_tasks(doc, {Task::caption_writing});
    EXPECT_TRUE(built.conversations.empty());
    ASSERT_EQ(built.skipped.size(), 1u);
    EXPECT_EQ(built.skipped[0].task(), Task::caption_writing);
    EXPECT_EQ(built.skipped[0].field(), "figures");
    EXPECT_THROW(build_structured_tasks_strict(doc, {Task::caption_writing}), MissingField);
}

TEST(StructuredTasks, PaperTitling) {
    auto convs = build_structured_tasks_strict(paper(), {Task::paper_titling});
    ASSERT_EQ(convs.size(), 1u);
    const auto& turn = convs[0].turns[0];
    EXPECT_EQ(turn.answer, "Packing Matters");
    EXPECT_NE(turn.question.find("concise and informative title"), std::string::npos);
    const auto ctx = render_context(std::get<InterleavedDoc>(convs[0].context));
    EXPECT_EQ(ctx, "We study packing.\nPadding wastes compute.\n<image>\nWaste over time.\nSee the figure.");
}

TEST(StructuredTasks, PaperTitlingFallsBackToFirstSection) {
    auto doc = paper();
    doc.abstract.reset();
    doc.sections[0].heading = "Motivation";
    auto convs = build_structured_tasks_strict(doc, {Task::paper_titling});
    EXPECT_EQ(render_context(std::get<InterleavedDoc>(convs[0].context)).rfind("Padding wastes compute.", 0), 0u);
    doc.title.reset();
    EXPECT_THROW(build_structured_tasks_strict(doc, {Task::paper_titling}), MissingField);
}

TEST(StructuredTasks, CaptionWritingPairsImagesWithRelativeText) {
    auto convs = build_structured_tasks_strict(paper(), {Task::caption_writing});
    ASSERT_EQ(convs.size(), 1u);
    const auto& c = convs[0];
    ASSERT_EQ(c.turns.size(), 2u);
    EXPECT_EQ(c.turns[0].answer, "Waste over time.");
    EXPECT_EQ(c.turns[1].answer, "Main results.");
    EXPECT_NE(c.turns[1].question.find("Image 2"), std::string::npos);
    const auto ctx = render_context(std::get<InterleavedDoc>(c.context));
    EXPECT_EQ(ctx, "<image>\nPadding wastes compute.\n<image>\nUtilization rises.");
    EXPECT_EQ(ctx.find("Waste over time."), std::string::npos);
}

TEST(StructuredTasks, ExperimentWritingExcludesSection) {
    auto convs = build_structured_tasks_strict(paper(), {Task::experiment_writing});
    ASSERT_EQ(convs.size(), 1u);
    EXPECT_EQ(convs[0].turns[0].answer, "Utilization rises.");
    const auto ctx = render_context(std::get<InterleavedDoc>(convs[0].context));
    EXPECT_EQ(ctx.find("Utilization rises."), std::string::npos);
    EXPECT_NE(ctx.find("Greedy buffers."), std::string::npos);
}

TEST(StructuredTasks, ExperimentHeadingMatch) {
    auto doc = paper();
    doc.sections[2].heading = "EVALUATION";
    EXPECT_EQ(experiments_section(doc), 2u);
    doc.sections[2].heading = "V. experiment";
    EXPECT_EQ(experiments_section(doc), 2u);
    doc.sections[2].heading = "Experimental setup";
    EXPECT_FALSE(experiments_section(doc));
    auto built = build_structured_tasks(doc, {Task::experiment_writing, Task::translation});
    ASSERT_EQ(built.skipped.size(), 2u);
    EXPECT_EQ(built.skipped[0].field(), "experiments");
}

TEST(StructuredTasks, TranslationNeedsExternalAnswer) {
    auto built = build_structured_tasks(paper(), {Task::translation});
    ASSERT_EQ(built.skipped.size(), 1u);
    EXPECT_EQ(built.skipped[0].field(), "translation");
    ExternalAnswers ext{"translated text"};
    auto convs = build_structured_tasks_strict(paper(), {Task::translation}, {}, ext);
    ASSERT_EQ(convs.size(), 1u);
    EXPECT_EQ(convs[0].turns[0].answer, "translated text");
    EXPECT_NE(convs[0].turns[0].question.find("translate the Experiments section into Chinese"), std::string::npos);
}

TEST(StructuredTasks, TaskOrderIsFixed) {
    auto convs = build_structured_tasks_strict(
        paper(), {Task::experiment_writing, Task::abstract_writing, Task::paper_titling, Task::caption_writing});
    ASSERT_EQ(convs.size(), 4u);
    EXPECT_EQ(convs[0].turns[0].task, Task::abstract_writing);
    EXPECT_EQ(convs[1].turns[0].task, Task::paper_titling);
    EXPECT_EQ(convs[2].turns[0].task, Task::caption_writing);
    EXPECT_EQ(convs[3].turns[0].task, Task::experiment_writing);
}

TEST(ReviewReply, Counts) {
    auto doc = paper();
    EXPECT_EQ(build_review_reply(doc).size(), 4u);

    doc.reviews = {ReviewThread{"Only a review.", std::nullopt}};
    auto convs = build_review_reply(doc);
    ASSERT_EQ(convs.size(), 1u);
    EXPECT_EQ(convs[0].turns[0].task, Task::review_writing);
    EXPECT_EQ(convs[0].turns[0].answer, "Only a review.");

    doc.reviews.clear();
    EXPECT_THROW(build_review_reply(doc), NoReviews);
}

TEST(ReviewReply, ReplyQuestionEmbedsReview) {
    auto convs = build_review_reply(paper());
    const auto& reply = convs[1].turns[0];
    EXPECT_EQ(reply.task, Task::reply_writing);
    EXPECT_EQ(reply.answer, "Thanks.");
    EXPECT_NE(reply.question.find("Here is the review:\nSolid work."), std::string::npos);
    EXPECT_NE(convs[0].turns[0].question.find("provide a constructive critique"), std::string::npos);
    // The paper itself is the shared context.
    EXPECT_NE(render_conversation(convs[1]).find("We study packing."), std::string::npos);
}

TEST(ExternalQA, MarksTurnsAsGenerated) {
    const auto doc = paper();
    auto conv = attach_external_qa(doc, {{"q1", "a1"}, {"q2", "a2"}, {"q3", "a3"}, {"q4", "a4"}});
    EXPECT_EQ(conv.turns.size(), 4u);
    EXPECT_TRUE(conv.multi_turn());
    for (const auto& t : conv.turns) {
        EXPECT_EQ(t.task, Task::external_generated);
        EXPECT_TRUE(t.generated_by_model);
    }
    EXPECT_FALSE(attach_external_qa(doc, {{"q", "a"}}).multi_turn());
    EXPECT_THROW(attach_external_qa(doc, {}), EmptyQAList);
    EXPECT_THROW(attach_external_qa(doc, {{"q", ""}}), SchemaViolation);
}

TEST(ExternalQA, GenerationPromptExpandsPaper) {
    const auto prompt = external_generation_prompt(paper());
    EXPECT_NE(prompt.find("3 to 5 question-answer pairs"), std::string::npos);
    EXPECT_NE(prompt.find("Paper:\nWe study packing.\nPadding wastes compute.\n<image>"), std::string::npos);
}

TEST(Render, TextOnlyTemplate) {
    Conversation c{"d", InterleavedDoc{{Segment::make_text("T")}}, {QAPair{"Q", "A", Task::abstract_writing, false}}};
    EXPECT_EQ(render_conversation(c), "Please read the paper: T, and answer the question: Q Answer: A");
}

TEST(Render, MultiImageContext) {
    Conversation c{"d", MultiImageDoc{{{"p1", 1, 1}, {"p2", 1, 1}}}, {QAPair{"Q", "A", Task::review_writing, false}}};
    EXPECT_EQ(render_conversation(c), "Please read the paper: <image>\n<image>, and answer the question: Q Answer: A");
}

TEST(Render, LaterTurnsOmitPaper) {
    Conversation c{"d", InterleavedDoc{{Segment::make_text("T")}},
                   {QAPair{"Q1", "A1", Task::external_generated, true}, QAPair{"Q2", "A2", Task::external_generated, true}}};
    const auto text = render_conversation(c);
    EXPECT_EQ(count(text, "Please read the paper"), 1u);
    EXPECT_EQ(text, "Please read the paper: T, and answer the question: Q1 Answer: A1\nQ2 Answer: A2");
}

TEST(Render, MarkerConservation) {
    for (const auto& c : build_review_reply(paper()))
        EXPECT_EQ(count(render_conversation(c), "<image>"), context_image_count(c.context));
    auto caption = build_structured_tasks_strict(paper(), {Task::caption_writing}).front();
    EXPECT_EQ(count(render_conversation(caption), "<image>"), 2u);
}

TEST(Render, PiecesCarryRoles) {
    Conversation c{"d", InterleavedDoc{{Segment::make_text("T"), Segment::make_image({"i", 1, 1})}},
                   {QAPair{"Q", "A", Task::abstract_writing, false}}};
    const auto pieces = render_pieces(c);
    ASSERT_EQ(pieces.size(), 4u);
    EXPECT_EQ(pieces[0].role, Role::context);
    EXPECT_EQ(pieces[0].text, "Please read the paper: T\n");
    EXPECT_TRUE(pieces[1].is_image);
    EXPECT_EQ(pieces[2].role, Role::question);
    EXPECT_EQ(pieces[2].text, ", and answer the question: Q Answer: ");
    EXPECT_EQ(pieces[3].role, Role::answer);
    EXPECT_EQ(pieces[3].text, "A");
}

TEST(Ntp, WholePaperAsAnswer) {
    auto c = build_ntp(paper());
    ASSERT_EQ(c.turns.size(), 1u);
    EXPECT_TRUE(c.turns[0].question.empty());
    EXPECT_EQ(c.turns[0].answer, render_context(paper_context(paper())));
    EXPECT_EQ(render_conversation(c), c.turns[0].answer);
    for (const auto& p : render_pieces(c)) EXPECT_EQ(p.role, Role::answer);
}

TEST(ConversationJson, RoundTrip) {
    std::vector<Conversation> all = build_review_reply(paper());
    all.push_back(attach_external_qa(paper(), {{"q", "a"}, {"q2", "a2"}}));
    all.push_back(Conversation{"d", MultiImageDoc{{{"p", 3, 4}}}, {QAPair{"Q", "A", Task::translation, false}}});
    all.push_back(build_ntp(paper()));
    for (const auto& c : all) {
        const auto j = serialize_conversation(c);
        EXPECT_EQ(parse_conversation(json::parse(j.dump())), c);
        EXPECT_EQ(j["multi_turn"], c.multi_turn());
        for (const auto& t : j["turns"]) EXPECT_TRUE(t.contains("generated_by_model"));
    }
    EXPECT_THROW(parse_conversation(json::parse(R"({"doc_id":"d","context_format":"pdf","context":[],"turns":[]})")),
                 SchemaViolation);
}

TEST(Templates, Overrides) {
    auto tpl = load_templates(json::parse(R"({"version": "2", "abstract_writing": "Summarize.",
                                             "conversation": {"prefix": "Doc: "}})"));
    EXPECT_EQ(tpl.version, "2");
    auto doc = paper();
    auto c = build_structured_tasks_strict(doc, {Task::abstract_writing}, tpl).front();
    EXPECT_EQ(c.turns[0].question, "Summarize.");
    EXPECT_EQ(render_conversation(c, tpl.conversation).rfind("Doc: ", 0), 0u);
    EXPECT_THROW(load_templates(json::parse(R"({"bogus": "x"})")), ConfigError);
    EXPECT_THROW(load_templates(json::parse(R"({"ntp": "x"})")), ConfigError);
    EXPECT_THROW(load_templates(json::parse(R"({"abstract_writing": 3})")), ConfigError);
}
