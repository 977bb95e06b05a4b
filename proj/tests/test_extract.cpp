#include <doctest.h>

#include <atomic>
#include <mutex>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "equal/common.hpp"
#include "equal/embed.hpp"
#include "equal/error.hpp"
#include "equal/extract.hpp"
#include "equal/synth.hpp"
#include "test_util.hpp"

using namespace equal;
using namespace equal::extract;

namespace {

// Minimal chat-completions endpoint returning a fixed completion per call,
// in request order.
class ChatFixture {
  public:
    explicit ChatFixture(std::vector<std::string> completions)
        : completions_(std::move(completions)) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const auto body = nlohmann::json::parse(req.body);
            {
                std::lock_guard<std::mutex> lock(mutex_);
                last_request = body;
            }
            const std::size_t i = std::min(index_.fetch_add(1), completions_.size() - 1);
            nlohmann::json reply = {
                {"choices", {{{"message", {{"role", "assistant"}, {"content", completions_[i]}}}}}},
                {"usage", {{"prompt_tokens", 100}, {"completion_tokens", 20}}}};
            res.set_content(reply.dump(), "application/json");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        worker_ = std::thread([this]() { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~ChatFixture() {
        server_.stop();
        worker_.join();
    }
    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
    std::size_t calls() const { return index_.load(); }

    nlohmann::json last_request;

  private:
    httplib::Server server_;
    std::thread worker_;
    std::vector<std::string> completions_;
    std::atomic<std::size_t> index_{0};
    std::mutex mutex_;
    int port_ = 0;
};

ExtractorSpec http_spec(const std::string& endpoint, bool refine = false) {
    ExtractorSpec spec;
    spec.kind = ExtractorKind::http;
    spec.endpoint = endpoint;
    spec.model = "test-model";
    spec.retries = 0;
    spec.refine = refine;
    return spec;
}

}  // namespace

TEST_SUITE("extract") {

TEST_CASE("parse_pairs: single pair") {
    const auto pairs = parse_pairs("Q: x?\nA: y.");
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].first == "x?");
    CHECK(pairs[0].second == "y.");
}

TEST_CASE("parse_pairs: void returns empty") {
    CHECK(parse_pairs("void").empty());
    CHECK(parse_pairs("  VOID  \n").empty());
    CHECK(parse_pairs("```\nvoid\n```").empty());
}

TEST_CASE("parse_pairs: dangling question errors with raw text") {
    try {
        parse_pairs("Q: x?");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("dangling") != std::string::npos);
        CHECK(e.raw == "Q: x?");
    }
}

TEST_CASE("parse_pairs: multiple pairs, fences, preamble, multi-line answers") {
    const std::string completion =
        "Sure, here are the pairs:\n"
        "```\n"
        "Q: first question?\n"
        "A: first answer\n"
        "spanning two lines.\n"
        "\n"
        "Q: second question?\n"
        "A: second answer.\n"
        "```\n";
    const auto pairs = parse_pairs(completion);
    REQUIRE(pairs.size() == 2);
    CHECK(pairs[0].first == "first question?");
    CHECK(pairs[0].second == "first answer\nspanning two lines.");
    CHECK(pairs[1].first == "second question?");
}

TEST_CASE("parse_pairs: garbage and stray answers rejected") {
    CHECK_THROWS_AS(parse_pairs("no markers at all"), ParseError);
    CHECK_THROWS_AS(parse_pairs("A: answer first"), ParseError);
    CHECK_THROWS_AS(parse_pairs(""), ParseError);
    CHECK_THROWS_AS(parse_pairs("Q: one?\nQ: two?\nA: only answer"), ParseError);
}

TEST_CASE("builtin templates load and render") {
    for (const std::string id : {"math", "code", "refine"}) {
        const auto tpl = PromptTemplate::builtin(id);
        CHECK(tpl.id == id);
        CHECK(!tpl.system_text.empty());
        REQUIRE(!tpl.examples.empty());
        const auto user = tpl.render_user("DOC BODY");
        CHECK(user.find("DOC BODY") != std::string::npos);
        CHECK(user.find("{{DOCUMENT}}") == std::string::npos);
        const auto system = tpl.render_system();
        CHECK(system.find(tpl.examples[0].first.substr(0, 20)) != std::string::npos);
    }
}

TEST_CASE("shipped few-shot outputs parse back into their own pairs") {
    for (const std::string id : {"math", "code", "refine"}) {
        const auto tpl = PromptTemplate::builtin(id);
        for (const auto& [input, output] : tpl.examples) {
            const auto pairs = parse_pairs(output);
            REQUIRE(pairs.size() == 1);
            CHECK(!pairs[0].first.empty());
            CHECK(!pairs[0].second.empty());
        }
    }
}

TEST_CASE("template parser enforces exactly one placeholder") {
    CHECK_THROWS_AS(PromptTemplate::parse("=== system ===\nsys\n=== user ===\nno placeholder", "t"),
                    DataError);
    CHECK_THROWS_AS(PromptTemplate::parse(
                        "=== system ===\nsys\n=== user ===\n{{DOCUMENT}} {{DOCUMENT}}", "t"),
                    DataError);
    const auto ok = PromptTemplate::parse("=== system ===\nsys\n=== user ===\n{{DOCUMENT}}", "t");
    CHECK(ok.examples.empty());
}

TEST_CASE("template files round-trip through the loader") {
    TempDir tmp;
    const auto path = tmp.file("custom.tpl");
    write_file(path,
               "=== system ===\nCustom system.\n=== example input ===\ndoc\n"
               "=== example output ===\nQ: q?\nA: a.\n=== user ===\n{{DOCUMENT}}\n");
    const auto tpl = PromptTemplate::builtin(path);  // non-builtin ids are paths
    CHECK(tpl.system_text == "Custom system.");
    REQUIRE(tpl.examples.size() == 1);
    CHECK(tpl.examples[0].second == "Q: q?\nA: a.");
}

TEST_CASE("extract_qa over http: two-pair fixture") {
    ChatFixture fixture({"Q: what is x?\nA: x is one.\n\nQ: what is y?\nA: y is two."});
    const auto spec = http_spec(fixture.endpoint());
    const corpus::Document doc{"doc-1", "body text", {}};
    const auto outcome = extract_qa(spec, doc);
    REQUIRE(outcome.pairs.size() == 2);
    CHECK(outcome.pairs[0].doc_id == "doc-1");
    CHECK(outcome.pairs[0].id == "doc-1#0");
    CHECK(outcome.pairs[1].id == "doc-1#1");
    CHECK(outcome.llm_calls == 1);
    CHECK(outcome.prompt_tokens == 100);
    CHECK(outcome.completion_tokens == 20);
    // request shape: model, two messages, temperature 0
    CHECK(fixture.last_request.at("model") == "test-model");
    CHECK(fixture.last_request.at("temperature").get<double>() == 0.0);
    REQUIRE(fixture.last_request.at("messages").size() == 2);
    CHECK(fixture.last_request.at("messages")[0].at("role") == "system");
    CHECK(fixture.last_request.at("messages")[1].at("role") == "user");
    const std::string user = fixture.last_request.at("messages")[1].at("content");
    CHECK(user.find("body text") != std::string::npos);
}

TEST_CASE("extract_qa over http: void yields zero pairs without error") {
    ChatFixture fixture({"void"});
    const auto outcome = extract_qa(http_spec(fixture.endpoint()), {"d", "text", {}});
    CHECK(outcome.pairs.empty());
    CHECK_FALSE(outcome.flagged);
}

TEST_CASE("extract_qa over http: garbled completion raises ParseError with raw text") {
    ChatFixture fixture({"%%% truncated garbage"});
    try {
        extract_qa(http_spec(fixture.endpoint()), {"d", "text", {}});
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.raw.find("garbage") != std::string::npos);
    }
}

TEST_CASE("extract_qa retries then surfaces TransportError") {
    // point at a closed port; retries exhaust quickly with zero backoff
    ExtractorSpec spec = http_spec("http://127.0.0.1:1");
    spec.retries = 2;
    spec.backoff_ms = 1;
    spec.timeout_s = 1;
    CHECK_THROWS_AS(extract_qa(spec, {"d", "text", {}}), TransportError);
}

TEST_CASE("refine_qa: fixture echo keeps the pair") {
    ChatFixture fixture({"Q: same question?\nA: same answer."});
    ExtractorSpec spec = http_spec(fixture.endpoint());
    corpus::QAPair pair{"p1", "d1", "same question?", "same answer."};
    std::string reason;
    const auto refined = refine_qa(spec, pair, &reason);
    REQUIRE(refined.has_value());
    CHECK(refined->question == pair.question);
    CHECK(refined->answer == pair.answer);
    CHECK(refined->id == "p1");
}

TEST_CASE("refine_qa: repaired pair replaces the original") {
    ChatFixture fixture({"Q: fixed question?\nA: a real answer."});
    corpus::QAPair broken{"p1", "d1", "fixed question", ""};
    std::string reason;
    const auto refined = refine_qa(http_spec(fixture.endpoint()), broken, &reason);
    REQUIRE(refined.has_value());
    CHECK(refined->answer == "a real answer.");
}

TEST_CASE("refine_qa: void drops the pair with a reason") {
    ChatFixture fixture({"void"});
    corpus::QAPair pair{"p1", "d1", "q?", "a"};
    std::string reason;
    const auto refined = refine_qa(http_spec(fixture.endpoint()), pair, &reason);
    CHECK_FALSE(refined.has_value());
    CHECK(reason.find("void") != std::string::npos);
}

TEST_CASE("extraction + refinement accounting flows into the outcome") {
    ChatFixture fixture({"Q: q1?\nA: a1.", "Q: q1 refined?\nA: a1 refined."});
    const auto outcome = extract_qa(http_spec(fixture.endpoint(), true), {"d", "t", {}});
    REQUIRE(outcome.pairs.size() == 1);
    CHECK(outcome.pairs[0].question == "q1 refined?");
    CHECK(outcome.llm_calls == 2);  // one extraction + one refinement
    CHECK(fixture.calls() == 2);
}

TEST_CASE("mock_extract: deterministic per (doc id, seed)") {
    const corpus::Document doc{"doc-9", synth::topic_marker(3) + " sig3w0 sig3w1 sig3w2 fl0 fl1", {}};
    const auto a = mock_extract(doc, 7);
    const auto b = mock_extract(doc, 7);
    REQUIRE(a.pairs.size() == b.pairs.size());
    REQUIRE(a.pairs.size() >= 1);
    CHECK(a.pairs.size() <= 3);
    for (std::size_t i = 0; i < a.pairs.size(); ++i) {
        CHECK(a.pairs[i].question == b.pairs[i].question);
        CHECK(a.pairs[i].answer == b.pairs[i].answer);
        CHECK(a.pairs[i].doc_id == "doc-9");
    }
    const auto c = mock_extract(doc, 8);
    CHECK((c.pairs.size() != a.pairs.size() || c.pairs[0].question != a.pairs[0].question));
}

TEST_CASE("mock_extract: missing marker flags the outcome") {
    const auto outcome = mock_extract({"d", "no marker here", {}}, 0);
    CHECK(outcome.pairs.empty());
    CHECK(outcome.flagged);
}

TEST_CASE("mock pairs embed nearer their own topic than any other") {
    const int topics = 6;
    const std::size_t dim = 256;
    const auto directions = synth::topic_directions(topics, dim);
    embed::HashEmbedder embedder(dim);

    int total = 0, good = 0;
    for (int t = 0; t < topics; ++t) {
        std::string text = synth::topic_marker(t);
        for (int j = 0; j < synth::kSignatureTokens; ++j) text += " " + synth::signature_token(t, j);
        for (int d = 0; d < 20; ++d) {
            const corpus::Document doc{"doc-" + std::to_string(t) + "-" + std::to_string(d), text, {}};
            for (const auto& pair : mock_extract(doc, 5).pairs) {
                const auto m = embedder.embed({"Q: " + pair.question + "\nA: " + pair.answer}, {"x"});
                double own = 0.0, best_other = -2.0;
                for (int u = 0; u < topics; ++u) {
                    const double sim = embed::cosine_sim(m.row(0), directions.row(u));
                    if (u == t) own = sim;
                    else best_other = std::max(best_other, sim);
                }
                ++total;
                if (own > best_other) ++good;
            }
        }
    }
    CHECK(static_cast<double>(good) >= 0.95 * static_cast<double>(total));
}

TEST_CASE("every emitted pair is non-empty and tied to its batch") {
    std::vector<corpus::Document> docs;
    for (int i = 0; i < 6; ++i) {
        docs.push_back({"doc-" + std::to_string(i),
                        synth::topic_marker(i % 2) + " sig" + std::to_string(i % 2) + "w0", {}});
    }
    ExtractorSpec spec;  // mock
    spec.mock_seed = 3;
    const auto outcomes = extract_batch(spec, docs);
    REQUIRE(outcomes.size() == docs.size());
    for (std::size_t i = 1; i < outcomes.size(); ++i) CHECK(outcomes[i - 1].doc_id < outcomes[i].doc_id);
    for (const auto& outcome : outcomes) {
        for (const auto& pair : outcome.pairs) {
            CHECK(!pair.question.empty());
            CHECK(!pair.answer.empty());
            CHECK(pair.doc_id == outcome.doc_id);
        }
    }
}

TEST_CASE("extract_batch over http re-sorts concurrent results by doc id") {
    ChatFixture fixture({"Q: q?\nA: a."});
    ExtractorSpec spec = http_spec(fixture.endpoint());
    spec.fanout = 4;
    std::vector<corpus::Document> docs;
    for (int i = 9; i >= 0; --i) docs.push_back({"doc-" + std::to_string(i), "text", {}});
    const auto outcomes = extract_batch(spec, docs);
    REQUIRE(outcomes.size() == 10);
    for (std::size_t i = 1; i < outcomes.size(); ++i) CHECK(outcomes[i - 1].doc_id < outcomes[i].doc_id);
}

TEST_CASE("spec validation and environment overrides") {
    ExtractorSpec spec;
    spec.kind = ExtractorKind::http;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec.endpoint = "http://x";
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec.model = "m";
    CHECK_NOTHROW(spec.validate());
    spec.max_pairs = 0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);

    setenv("EQUAL_API_URL", "http://env-host/v1", 1);
    setenv("EQUAL_MODEL", "env-model", 1);
    setenv("EQUAL_API_KEY", "env-key", 1);
    ExtractorSpec env_spec;
    env_spec.apply_env();
    CHECK(env_spec.endpoint == "http://env-host/v1");
    CHECK(env_spec.model == "env-model");
    CHECK(env_spec.api_key == "env-key");
    unsetenv("EQUAL_API_URL");
    unsetenv("EQUAL_MODEL");
    unsetenv("EQUAL_API_KEY");
}

}  // TEST_SUITE
