#include "equal/extract.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <fstream>
#include <future>
#include <sstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "equal/common.hpp"
#include "equal/error.hpp"
#include "equal/synth.hpp"

namespace equal::extract {

using nlohmann::json;

namespace {

const char* kMathTemplate = R"(=== system ===
You are an excellent AI assistant who is good at constructing question-answer (Q-A) pairs. Your task is to construct some math Q-A from the original documents.

Input:

Each document contains multiple sections of text. Some of these sections may contain mathematical content which can be used to construct Q-A pairs.

Output:

Identify valid content and construct Q-A pairs. A valid Q-A pair must consist of a clearly defined question and its corresponding answer. Specially, the questions should be solvable that provide valid and complete pre-conditions; and the answers need to satisfy the Chain of Thought (CoT) format, which instructs the responder to solve the question step by step. If the content in the document is not suitable for Q-A construction, return void for that document.

Write each extracted pair as two blocks, one starting with "Q:" and one starting with "A:".
=== example input ===
A ball is dropped from a tall tower. Free fall from rest covers s = (1/2) g t^2. Taking g = 9.8 m/s^2, after 3 seconds the ball has fallen 0.5 * 9.8 * 9 = 44.1 meters. Readers often ask how far the ball falls in the first few seconds; the distance follows directly from the formula.
=== example output ===
Q: A ball is dropped from rest and falls freely under gravity with g = 9.8 m/s^2. How far does it fall during the first 3 seconds?
A: Free fall from rest covers s = (1/2) g t^2. Step 1: square the time, t^2 = 3^2 = 9. Step 2: substitute, s = 0.5 * 9.8 * 9 = 44.1. The ball falls 44.1 meters.
=== user ===
Content:

{{DOCUMENT}}
)";

const char* kCodeTemplate = R"(=== system ===
You are given a set of pre-processed documents, each of which may contain natural question-answer (Q-A) pairs. Your task is to identify and extract these pairs while ignoring unrelated content such as ads, markup, or boilerplate text.

Input:

Each document contains multiple sections of text. Some of these sections may have clear questions followed by answers, while others may be irrelevant (e.g., ads or noise).

Output:

Extract the Q-A pairs found within each document. A valid Q-A pair must consist of a clearly defined question and its corresponding answer. If no natural Q-A pair exists in the document, return void for that document. In the document, in order to describe the problem more clearly, the questioner usually attaches some useful information (e.g., code or explanation) to make it easier for others to better understand the problem. You need to extract this part of the content that needs to be complete as well.

Write each extracted pair as two blocks, one starting with "Q:" and one starting with "A:".
=== example input ===
How do I reverse a list in Python without modifying the original? I tried items.reverse() but it mutates the list in place. --- sponsored: cheap cloud hosting --- You can use slicing: reversed_copy = items[::-1]. Slicing returns a new list and leaves the original untouched.
=== example output ===
Q: How do I reverse a list in Python without modifying the original? I tried items.reverse() but it mutates the list in place.
A: Use slicing: reversed_copy = items[::-1]. Slicing returns a new list and leaves the original untouched.
=== user ===
Content:

{{DOCUMENT}}
)";

const char* kRefineTemplate = R"(=== system ===
You review a question-answer (Q-A) pair that was extracted from a document. Repair issues such as improper formatting, missing or truncated answers, or answers that do not match the question. Keep the original meaning; do not invent unrelated content. Return the corrected pair as two blocks, one starting with "Q:" and one starting with "A:". If the pair cannot be repaired into a clearly defined question with a matching answer, return void.
=== example input ===
Q: How far does the ball fall in 3 seconds
A:
=== example output ===
Q: A ball is dropped from rest with g = 9.8 m/s^2. How far does it fall during the first 3 seconds?
A: Using s = (1/2) g t^2: s = 0.5 * 9.8 * 9 = 44.1 meters.
=== user ===
{{DOCUMENT}}
)";

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

}  // namespace

PromptTemplate PromptTemplate::parse(const std::string& content, const std::string& id) {
    PromptTemplate tpl;
    tpl.id = id;
    std::istringstream in(content);
    std::string line, section;
    std::string cur_example_input;
    bool have_example_input = false;
    std::string acc;
    const auto flush = [&]() {
        const std::string text = trim(acc);
        acc.clear();
        if (section.empty()) {
            if (!text.empty()) throw DataError("template " + id + ": text before first section");
        } else if (section == "system") {
            tpl.system_text = text;
        } else if (section == "example input") {
            cur_example_input = text;
            have_example_input = true;
        } else if (section == "example output") {
            if (!have_example_input) throw DataError("template " + id + ": example output without input");
            tpl.examples.emplace_back(cur_example_input, text);
            have_example_input = false;
        } else if (section == "user") {
            tpl.user_text = text;
        } else {
            throw DataError("template " + id + ": unknown section \"" + section + "\"");
        }
    };
    while (std::getline(in, line)) {
        const std::string t = trim(line);
        if (t.size() > 6 && t.rfind("===", 0) == 0 && t.substr(t.size() - 3) == "===") {
            flush();
            section = trim(t.substr(3, t.size() - 6));
            continue;
        }
        acc += line;
        acc += '\n';
    }
    flush();
    if (tpl.system_text.empty()) throw DataError("template " + id + ": missing system section");
    if (tpl.user_text.empty()) throw DataError("template " + id + ": missing user section");
    const std::string placeholder = "{{DOCUMENT}}";
    std::size_t count = 0;
    for (std::size_t pos = tpl.user_text.find(placeholder); pos != std::string::npos;
         pos = tpl.user_text.find(placeholder, pos + 1)) {
        ++count;
    }
    if (count != 1) {
        throw DataError("template " + id + ": needs exactly one {{DOCUMENT}} placeholder, found " +
                        std::to_string(count));
    }
    return tpl;
}

PromptTemplate PromptTemplate::load_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open template " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str(), path);
}

PromptTemplate PromptTemplate::builtin(const std::string& id) {
    if (id == "math") return parse(kMathTemplate, "math");
    if (id == "code") return parse(kCodeTemplate, "code");
    if (id == "refine") return parse(kRefineTemplate, "refine");
    // anything else is a file path
    return load_file(id);
}

std::string PromptTemplate::render_system() const {
    std::string out = system_text;
    for (const auto& [input, output] : examples) {
        out += "\n\nHere is an example:\n\nContent:\n\n" + input + "\n\nExpected extraction:\n\n" + output;
    }
    return out;
}

std::string PromptTemplate::render_user(const std::string& document) const {
    std::string out = user_text;
    const std::string placeholder = "{{DOCUMENT}}";
    out.replace(out.find(placeholder), placeholder.size(), document);
    return out;
}

void ExtractorSpec::apply_env() {
    if (const char* v = std::getenv("EQUAL_API_URL")) endpoint = v;
    if (const char* v = std::getenv("EQUAL_API_KEY")) api_key = v;
    if (const char* v = std::getenv("EQUAL_MODEL")) model = v;
}

void ExtractorSpec::validate() const {
    if (max_pairs < 1) throw ConfigError("extractor max_pairs must be >= 1");
    if (kind == ExtractorKind::http) {
        if (endpoint.empty()) throw ConfigError("http extractor requires an endpoint");
        if (model.empty()) throw ConfigError("http extractor requires a model name");
    }
}

std::vector<std::pair<std::string, std::string>> parse_pairs(const std::string& completion) {
    // drop markdown fences, keep everything else verbatim
    std::vector<std::string> lines;
    {
        std::istringstream in(completion);
        std::string line;
        while (std::getline(in, line)) {
            if (trim(line).rfind("```", 0) == 0) continue;
            lines.push_back(line);
        }
    }
    {
        std::string whole;
        for (const auto& l : lines) { whole += l; whole += '\n'; }
        std::string t = trim(whole);
        std::transform(t.begin(), t.end(), t.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (t == "void" || t == "void.") return {};
    }

    std::vector<std::pair<std::string, std::string>> out;
    std::string question, answer;
    int state = 0;  // 0 = before first Q, 1 = in question, 2 = in answer
    bool saw_marker = false;
    const auto marker = [](const std::string& line) -> std::pair<char, std::string> {
        std::size_t i = 0;
        while (i < line.size() && (std::isspace(static_cast<unsigned char>(line[i])) ||
                                   line[i] == '*' || line[i] == '#' || line[i] == '>' || line[i] == '-')) {
            ++i;
        }
        if (i + 1 < line.size() && line[i + 1] == ':' &&
            (line[i] == 'Q' || line[i] == 'q' || line[i] == 'A' || line[i] == 'a')) {
            const char kind = static_cast<char>(std::tolower(static_cast<unsigned char>(line[i])));
            return {kind, trim(line.substr(i + 2))};
        }
        return {0, {}};
    };
    const auto close_pair = [&]() {
        const std::string q = trim(question), a = trim(answer);
        if (q.empty()) throw ParseError("empty question in completion", completion);
        if (a.empty()) throw ParseError("dangling question without answer", completion);
        out.emplace_back(q, a);
        question.clear();
        answer.clear();
    };
    for (const auto& line : lines) {
        const auto [kind, rest] = marker(line);
        if (kind == 'q') {
            if (state == 2) close_pair();
            else if (state == 1) throw ParseError("dangling question without answer", completion);
            question = rest + "\n";
            state = 1;
            saw_marker = true;
        } else if (kind == 'a') {
            if (state != 1) throw ParseError("answer without a preceding question", completion);
            answer = rest + "\n";
            state = 2;
            saw_marker = true;
        } else if (state == 1) {
            question += line + "\n";
        } else if (state == 2) {
            answer += line + "\n";
        }
        // text before the first marker is preamble and ignored
    }
    if (state == 1) throw ParseError("dangling question without answer", completion);
    if (state == 2) close_pair();
    if (!saw_marker) throw ParseError("no Q:/A: markers in completion", completion);
    return out;
}

namespace {

std::uint64_t estimate_tokens(const std::string& text) {
    return (text.size() + 3) / 4;
}

struct ChatReply {
    std::string content;
    std::uint64_t prompt_tokens = 0;
    std::uint64_t completion_tokens = 0;
};

ChatReply chat_completion(const ExtractorSpec& spec, const std::string& system_text,
                          const std::string& user_text) {
    const UrlParts url = split_url(spec.endpoint);
    httplib::Client client(url.base.c_str());
    client.set_read_timeout(spec.timeout_s, 0);
    client.set_connection_timeout(spec.timeout_s, 0);
    httplib::Headers headers;
    if (!spec.api_key.empty()) headers.emplace("Authorization", "Bearer " + spec.api_key);

    json body;
    body["model"] = spec.model;
    body["messages"] = json::array({{{"role", "system"}, {"content", system_text}},
                                    {{"role", "user"}, {"content", user_text}}});
    body["temperature"] = 0;
    const std::string payload = body.dump();

    httplib::Result res;
    std::string last_error = "no attempt made";
    for (int attempt = 0; attempt <= spec.retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(
                static_cast<long>(spec.backoff_ms) << (attempt - 1)));
        }
        res = client.Post(url.path_prefix + "/chat/completions", headers, payload, "application/json");
        if (res && res->status == 200) break;
        last_error = res ? "HTTP " + std::to_string(res->status) : httplib::to_string(res.error());
    }
    if (!res || res->status != 200) {
        throw TransportError("chat completion failed after " + std::to_string(spec.retries + 1) +
                             " attempts: " + last_error);
    }
    json reply;
    try {
        reply = json::parse(res->body);
    } catch (const json::parse_error& e) {
        throw TransportError(std::string("chat endpoint returned invalid JSON: ") + e.what());
    }
    ChatReply out;
    try {
        out.content = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw TransportError(std::string("chat reply missing choices[0].message.content: ") + e.what());
    }
    if (reply.contains("usage") && reply["usage"].is_object()) {
        out.prompt_tokens = reply["usage"].value("prompt_tokens", 0u);
        out.completion_tokens = reply["usage"].value("completion_tokens", 0u);
    }
    if (out.prompt_tokens == 0) out.prompt_tokens = estimate_tokens(system_text) + estimate_tokens(user_text);
    if (out.completion_tokens == 0) out.completion_tokens = estimate_tokens(out.content);
    return out;
}

// UTF-8 safe truncation with an ellipsis marker.
std::string cap_document(const std::string& text, std::size_t cap) {
    if (text.size() <= cap) return text;
    std::size_t cut = cap;
    while (cut > 0 && (static_cast<unsigned char>(text[cut]) & 0xc0) == 0x80) --cut;
    return text.substr(0, cut) + " [...]";
}

}  // namespace

std::optional<corpus::QAPair> refine_qa(const ExtractorSpec& spec, const corpus::QAPair& pair,
                                        std::string* drop_reason, ExtractionOutcome* accounting) {
    const PromptTemplate tpl = PromptTemplate::builtin(spec.refine_template_id);
    const std::string rendered = "Q: " + pair.question + "\nA: " + pair.answer;
    const ChatReply reply = chat_completion(spec, tpl.render_system(), tpl.render_user(rendered));
    if (accounting) {
        accounting->llm_calls += 1;
        accounting->prompt_tokens += reply.prompt_tokens;
        accounting->completion_tokens += reply.completion_tokens;
    }
    std::vector<std::pair<std::string, std::string>> refined;
    try {
        refined = parse_pairs(reply.content);
    } catch (const ParseError& e) {
        if (drop_reason) *drop_reason = std::string("unparseable refinement: ") + e.what();
        return std::nullopt;
    }
    if (refined.empty()) {
        if (drop_reason) *drop_reason = "refinement returned void";
        return std::nullopt;
    }
    corpus::QAPair out = pair;
    out.question = refined.front().first;
    out.answer = refined.front().second;
    if (out.question.empty() || out.answer.empty()) {
        if (drop_reason) *drop_reason = "refined pair still empty";
        return std::nullopt;
    }
    return out;
}

ExtractionOutcome extract_qa(const ExtractorSpec& spec, const corpus::Document& doc) {
    spec.validate();
    if (doc.text.empty()) throw DataError("extract_qa: empty document text for \"" + doc.id + "\"");
    if (spec.kind == ExtractorKind::mock) return mock_extract(doc, spec.mock_seed);

    const auto t0 = std::chrono::steady_clock::now();
    ExtractionOutcome outcome;
    outcome.doc_id = doc.id;

    const PromptTemplate tpl = PromptTemplate::builtin(spec.template_id);
    const std::string user = tpl.render_user(cap_document(doc.text, spec.doc_char_cap));
    const ChatReply reply = chat_completion(spec, tpl.render_system(), user);
    outcome.llm_calls += 1;
    outcome.prompt_tokens += reply.prompt_tokens;
    outcome.completion_tokens += reply.completion_tokens;

    auto raw_pairs = parse_pairs(reply.content);
    if (raw_pairs.size() > static_cast<std::size_t>(spec.max_pairs)) {
        raw_pairs.resize(static_cast<std::size_t>(spec.max_pairs));
    }
    std::size_t index = 0;
    for (const auto& [question, answer] : raw_pairs) {
        corpus::QAPair pair;
        pair.id = doc.id + "#" + std::to_string(index++);
        pair.doc_id = doc.id;
        pair.question = question;
        pair.answer = answer;
        if (spec.refine) {
            std::string reason;
            auto refined = refine_qa(spec, pair, &reason, &outcome);
            if (!refined) {
                outcome.dropped.push_back({pair.id, reason});
                continue;
            }
            pair = std::move(*refined);
        }
        outcome.pairs.push_back(std::move(pair));
    }
    outcome.latency_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return outcome;
}

ExtractionOutcome mock_extract(const corpus::Document& doc, std::uint64_t seed) {
    ExtractionOutcome outcome;
    outcome.doc_id = doc.id;
    outcome.llm_calls = 1;  // the ledger charges mock calls like real ones
    outcome.prompt_tokens = tokenize(doc.text).size();

    const auto topic = synth::parse_topic_marker(doc.text);
    if (!topic) {
        outcome.flagged = true;
        outcome.flag_reason = "document lacks topic=<t> marker";
        return outcome;
    }
    // Documents with several topic markers are sectioned: each pair draws
    // from one section's tokens. Single-marker documents with mixed
    // vocabulary yield pairs that blend it.
    const bool sectioned = synth::parse_topic_markers(doc.text).size() >= 2;
    std::map<int, std::vector<std::string>> groups;
    for (const auto& tok : tokenize(doc.text)) {
        if (const auto t = synth::signature_topic_of(tok)) {
            groups[sectioned ? *t : 0].push_back(tok);
        }
    }
    if (groups.empty()) {
        for (int j = 0; j < synth::kSignatureTokens; ++j) {
            groups[*topic].push_back(synth::signature_token(*topic, j));
        }
    }
    std::vector<const std::vector<std::string>*> group_list;
    for (const auto& [t, toks] : groups) group_list.push_back(&toks);

    rng::Engine eng(rng::mix(fnv1a(doc.id), seed));
    const std::size_t n_pairs = 1 + rng::uniform_index(eng, 3);
    const auto sample_text = [&](const std::vector<std::string>& pool) {
        std::string text;
        const std::size_t n_tokens = 4 + rng::uniform_index(eng, 3);
        for (std::size_t i = 0; i < n_tokens; ++i) {
            if (i) text += ' ';
            text += pool[rng::uniform_index(eng, pool.size())];
        }
        text += ' ';
        text += synth::noise_token(eng());
        return text;
    };
    for (std::size_t k = 0; k < n_pairs; ++k) {
        const auto& pool = *group_list[rng::uniform_index(eng, group_list.size())];
        corpus::QAPair pair;
        pair.id = doc.id + "#" + std::to_string(k);
        pair.doc_id = doc.id;
        pair.question = sample_text(pool) + "?";
        pair.answer = sample_text(pool);
        outcome.completion_tokens += tokenize(pair.question).size() + tokenize(pair.answer).size();
        outcome.pairs.push_back(std::move(pair));
    }
    return outcome;
}

std::vector<ExtractionOutcome> extract_batch(const ExtractorSpec& spec,
                                             std::span<const corpus::Document> docs) {
    std::vector<ExtractionOutcome> outcomes;
    outcomes.reserve(docs.size());
    if (spec.kind == ExtractorKind::mock || spec.fanout <= 1 || docs.size() <= 1) {
        for (const auto& doc : docs) outcomes.push_back(extract_qa(spec, doc));
    } else {
        const std::size_t fanout = static_cast<std::size_t>(spec.fanout);
        std::vector<std::optional<ExtractionOutcome>> slots(docs.size());
        std::vector<std::exception_ptr> errors(docs.size());
        for (std::size_t off = 0; off < docs.size(); off += fanout) {
            const std::size_t end = std::min(docs.size(), off + fanout);
            std::vector<std::future<void>> inflight;
            for (std::size_t i = off; i < end; ++i) {
                inflight.push_back(std::async(std::launch::async, [&, i]() {
                    try {
                        slots[i] = extract_qa(spec, docs[i]);
                    } catch (...) {
                        errors[i] = std::current_exception();
                    }
                }));
            }
            for (auto& f : inflight) f.wait();
        }
        for (std::size_t i = 0; i < docs.size(); ++i) {
            if (errors[i]) std::rethrow_exception(errors[i]);
            outcomes.push_back(std::move(*slots[i]));
        }
    }
    std::sort(outcomes.begin(), outcomes.end(),
              [](const ExtractionOutcome& a, const ExtractionOutcome& b) { return a.doc_id < b.doc_id; });
    return outcomes;
}

}  // namespace equal::extract
