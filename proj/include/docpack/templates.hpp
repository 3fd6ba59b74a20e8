#pragma once

// Question templates keyed by task, plus the conversation wrapper strings.

#include <array>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "docpack/error.hpp"

namespace docpack {

enum class Task {
    abstract_writing,
    paper_titling,
    caption_writing,
    experiment_writing,
    translation,
    review_writing,
    reply_writing,
    external_generated,
    ntp,
};

inline constexpr std::array<Task, 9> kAllTasks = {
    Task::abstract_writing, Task::paper_titling,  Task::caption_writing,
    Task::experiment_writing, Task::translation, Task::review_writing,
    Task::reply_writing,    Task::external_generated, Task::ntp,
};

inline constexpr std::array<Task, 5> kStructuredTasks = {
    Task::abstract_writing, Task::paper_titling, Task::caption_writing,
    Task::experiment_writing, Task::translation,
};

inline std::string_view to_string(Task t) {
    switch (t) {
        case Task::abstract_writing: return "abstract_writing";
        case Task::paper_titling: return "paper_titling";
        case Task::caption_writing: return "caption_writing";
        case Task::experiment_writing: return "experiment_writing";
        case Task::translation: return "translation";
        case Task::review_writing: return "review_writing";
        case Task::reply_writing: return "reply_writing";
        case Task::external_generated: return "external_generated";
        case Task::ntp: return "ntp";
    }
    return "ntp";
}

inline std::optional<Task> parse_task(std::string_view s) {
    for (Task t : kAllTasks)
        if (to_string(t) == s) return t;
    return std::nullopt;
}

// Bit set over Task.
class TaskSet {
public:
    TaskSet() = default;
    TaskSet(std::initializer_list<Task> tasks) {
        for (Task t : tasks) insert(t);
    }

    static TaskSet all() {
        TaskSet s;
        for (Task t : kAllTasks) s.insert(t);
        return s;
    }

    void insert(Task t) { bits_ |= bit(t); }
    bool contains(Task t) const { return (bits_ & bit(t)) != 0; }
    bool empty() const { return bits_ == 0; }
    bool operator==(const TaskSet&) const = default;

private:
    static unsigned bit(Task t) { return 1u << static_cast<unsigned>(t); }
    unsigned bits_ = 0;
};

struct ConversationTemplate {
    std::string prefix = "Please read the paper: ";
    std::string question_lead = ", and answer the question: ";
    std::string answer_lead = " Answer: ";
    std::string turn_separator = "\n";
};

// Placeholders: {index} in caption_writing, {review} in reply_writing,
// {paper} in external_prompt.
struct Templates {
    std::string version = "1";
    ConversationTemplate conversation;
    std::string abstract_writing =
        "Read the full text of the paper and provide a concise summary in the form of an abstract.";
    std::string paper_titling =
        "Based on the provided abstract or introduction of the research paper, please generate a "
        "concise and informative title.";
    std::string caption_writing =
        "Give the relative texts of the images or tables, please write a caption for each image or "
        "table based on the relative texts provided. Image {index}:";
    std::string experiment_writing =
        "Please write the \"Experiments\" section based on the incomplete research paper provided.";
    std::string translation =
        "Please read the full text of the following research paper and translate the Experiments "
        "section into Chinese.";
    std::string review_writing =
        "Please review the following paper and provide a constructive critique. Focus on the "
        "methodology, results, and overall contributions, and highlight both strengths and areas for "
        "improvement. Your review should be detailed and insightful, offering suggestions for "
        "enhancing the research.";
    std::string reply_writing =
        "Given the following paper and its review, write a reply to address the feedback provided.\n"
        "Here is the review:\n{review}";
    std::string external_prompt =
        "You will be given a research paper. If it is not written in English, reply with nothing. "
        "Otherwise write 3 to 5 question-answer pairs about it. Each question must name the figure or "
        "table it concerns (for example \"Figure 2\" or \"Table 1\"), need a long answer, and be "
        "answerable only from this paper. Each answer must begin with \"According to the original "
        "text\", quote the supporting passage, then answer in detail, describing the referenced image "
        "where relevant. Output only the list of pairs.\nPaper:\n{paper}";

    const std::string& question_for(Task t) const {
        static const std::string empty;
        switch (t) {
            case Task::abstract_writing: return abstract_writing;
            case Task::paper_titling: return paper_titling;
            case Task::caption_writing: return caption_writing;
            case Task::experiment_writing: return experiment_writing;
            case Task::translation: return translation;
            case Task::review_writing: return review_writing;
            case Task::reply_writing: return reply_writing;
            default: return empty;
        }
    }

    std::string* mutable_question(Task t) {
        switch (t) {
            case Task::abstract_writing: return &abstract_writing;
            case Task::paper_titling: return &paper_titling;
            case Task::caption_writing: return &caption_writing;
            case Task::experiment_writing: return &experiment_writing;
            case Task::translation: return &translation;
            case Task::review_writing: return &review_writing;
            case Task::reply_writing: return &reply_writing;
            default: return nullptr;
        }
    }
};

inline std::string substitute(std::string text, std::string_view placeholder, std::string_view value) {
    for (std::size_t pos = text.find(placeholder); pos != std::string::npos;
         pos = text.find(placeholder, pos + value.size()))
        text.replace(pos, placeholder.size(), value);
    return text;
}

// Overrides from a JSON object keyed by task name (plus "version",
// "external_prompt" and a "conversation" object). Unknown keys are an error.
inline Templates load_templates(const nlohmann::json& j, Templates base = {}) {
    if (!j.is_object()) throw ConfigError("templates must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        if (key == "conversation") {
            if (!value.is_object()) throw ConfigError("templates.conversation must be an object");
            auto& c = base.conversation;
            for (const auto& [ck, cv] : value.items()) {
                if (!cv.is_string()) throw ConfigError("templates.conversation." + ck + " must be a string");
                if (ck == "prefix") c.prefix = cv.get<std::string>();
                else if (ck == "question_lead") c.question_lead = cv.get<std::string>();
                else if (ck == "answer_lead") c.answer_lead = cv.get<std::string>();
                else if (ck == "turn_separator") c.turn_separator = cv.get<std::string>();
                else throw ConfigError("unknown template key conversation." + ck);
            }
            continue;
        }
        if (!value.is_string()) throw ConfigError("template '" + key + "' must be a string");
        if (key == "version") {
            base.version = value.get<std::string>();
        } else if (key == "external_prompt") {
            base.external_prompt = value.get<std::string>();
        } else if (auto t = parse_task(key); t && base.mutable_question(*t)) {
            *base.mutable_question(*t) = value.get<std::string>();
        } else {
            throw ConfigError("unknown template key " + key);
        }
    }
    return base;
}

inline Templates load_templates_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open templates file " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("templates file: ") + e.what());
    }
    return load_templates(j);
}

}  // namespace docpack
