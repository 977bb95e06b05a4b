#include <doctest.h>

#include <set>
#include <sstream>

#include "equal/common.hpp"
#include "equal/corpus.hpp"
#include "equal/error.hpp"
#include "test_util.hpp"

using namespace equal;
using namespace equal::corpus;

TEST_SUITE("corpus") {

TEST_CASE("load_documents keeps file order") {
    TempDir tmp;
    const auto path = tmp.file("docs.jsonl");
    write_file(path,
               R"({"id":"d1","text":"alpha"})" "\n"
               R"({"id":"d2","text":"beta","source":"web"})" "\n"
               R"({"id":"d3","text":"gamma"})" "\n");
    const auto docs = load_documents(path);
    REQUIRE(docs.size() == 3);
    CHECK(docs.documents[0].id == "d1");
    CHECK(docs.documents[1].id == "d2");
    CHECK(docs.documents[2].id == "d3");
    CHECK(docs.documents[1].meta.at("source") == "web");
}

TEST_CASE("load_documents rejects duplicate ids by name") {
    TempDir tmp;
    const auto path = tmp.file("docs.jsonl");
    write_file(path,
               R"({"id":"d1","text":"alpha"})" "\n"
               R"({"id":"d1","text":"beta"})" "\n");
    CHECK_THROWS_WITH_AS(load_documents(path), doctest::Contains("\"d1\""), DataError);
}

TEST_CASE("load_documents: empty file is an empty set") {
    TempDir tmp;
    const auto path = tmp.file("docs.jsonl");
    write_file(path, "");
    CHECK(load_documents(path).size() == 0);
}

TEST_CASE("load_documents reports malformed line numbers") {
    TempDir tmp;
    const auto path = tmp.file("docs.jsonl");
    write_file(path, R"({"id":"d1","text":"alpha"})" "\nnot json\n");
    CHECK_THROWS_WITH_AS(load_documents(path), doctest::Contains(":2:"), DataError);
}

TEST_CASE("load_documents: missing file") {
    CHECK_THROWS_AS(load_documents("/nonexistent/docs.jsonl"), DataError);
}

TEST_CASE("load order determinism") {
    TempDir tmp;
    const auto path = tmp.file("docs.jsonl");
    std::string content;
    for (int i = 0; i < 50; ++i) {
        content += R"({"id":"d)" + std::to_string(i) + R"(","text":"body )" + std::to_string(i * 7) + R"("})" "\n";
    }
    write_file(path, content);
    const auto a = load_documents(path);
    const auto b = load_documents(path);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.documents[i].id == b.documents[i].id);
        CHECK(a.documents[i].text == b.documents[i].text);
    }
}

TEST_CASE("load_reference basics") {
    TempDir tmp;
    const auto path = tmp.file("ref.jsonl");
    write_file(path,
               R"({"question":"what is 2+2?","answer":"4"})" "\n"
               R"({"id":"r9","question":"sky color?","answer":"blue"})" "\n");
    const auto ref = load_reference(path);
    REQUIRE(ref.size() == 2);
    CHECK(ref.items[0].id == "ref-0");
    CHECK(ref.items[1].id == "r9");
    CHECK(ref.items[0].doc_id.empty());
}

TEST_CASE("load_reference rejects empty answer") {
    TempDir tmp;
    const auto path = tmp.file("ref.jsonl");
    write_file(path, R"({"question":"what?","answer":""})" "\n");
    CHECK_THROWS_AS(load_reference(path), DataError);
}

TEST_CASE("load_reference: 100 generated records preserve order") {
    TempDir tmp;
    const auto path = tmp.file("ref.jsonl");
    std::string content;
    for (int i = 0; i < 100; ++i) {
        content += R"({"id":"r)" + std::to_string(i) + R"(","question":"q)" + std::to_string(i) +
                   R"(?","answer":"a)" + std::to_string(i) + R"("})" "\n";
    }
    write_file(path, content);
    const auto ref = load_reference(path);
    REQUIRE(ref.size() == 100);
    for (int i = 0; i < 100; ++i) CHECK(ref.items[i].id == "r" + std::to_string(i));
}

namespace {

DocumentSet make_docs(const std::vector<std::pair<std::string, std::string>>& rows) {
    DocumentSet set;
    for (const auto& [id, text] : rows) set.documents.push_back({id, text, {}});
    return set;
}

ReferenceSet make_ref(const std::vector<std::pair<std::string, std::string>>& rows) {
    ReferenceSet set;
    int i = 0;
    for (const auto& [q, a] : rows) set.items.push_back({"ref-" + std::to_string(i++), "", q, a});
    return set;
}

// Brute-force n-gram overlap check on token strings, independent of the
// hashing used by ngram_filter.
bool shares_ngram(const std::string& a, const std::string& b, std::size_t n) {
    const auto ta = tokenize(a), tb = tokenize(b);
    if (ta.size() < n || tb.size() < n) return false;
    std::set<std::string> grams;
    for (std::size_t i = 0; i + n <= ta.size(); ++i) {
        std::string g;
        for (std::size_t k = 0; k < n; ++k) g += ta[i + k] + "\x1f";
        grams.insert(g);
    }
    for (std::size_t i = 0; i + n <= tb.size(); ++i) {
        std::string g;
        for (std::size_t k = 0; k < n; ++k) g += tb[i + k] + "\x1f";
        if (grams.count(g)) return true;
    }
    return false;
}

}  // namespace

TEST_CASE("ngram_filter removes verbatim contamination") {
    const std::string span = "one two three four five six seven eight nine ten";
    const auto docs = make_docs({{"d1", "intro " + span + " outro"},
                                 {"d2", "completely different words in this body"}});
    const auto ref = make_ref({{"prefix " + span, "short answer"}});
    const auto kept = ngram_filter(docs, ref, 10);
    REQUIRE(kept.size() == 1);
    CHECK(kept.documents[0].id == "d2");
}

TEST_CASE("ngram_filter keeps disjoint corpora intact") {
    const auto docs = make_docs({{"d1", "alpha beta gamma delta"}, {"d2", "epsilon zeta"}});
    const auto ref = make_ref({{"totally unrelated question?", "unrelated answer"}});
    const auto kept = ngram_filter(docs, ref, 10);
    CHECK(kept.size() == 2);
}

TEST_CASE("ngram_filter: 9-token overlap survives n=10") {
    const std::string span9 = "one two three four five six seven eight nine";
    const auto docs = make_docs({{"d1", span9 + " different tail here"}});
    const auto ref = make_ref({{span9 + " ten", "answer text"}});
    CHECK(ngram_filter(docs, ref, 10).size() == 1);
    // the same doc dies at n=9
    CHECK(ngram_filter(docs, ref, 9).size() == 0);
}

TEST_CASE("ngram_filter is idempotent and sound (brute force)") {
    // small mixed corpus: some contaminated, some clean
    std::vector<std::pair<std::string, std::string>> rows;
    const std::string span = "a b c d e f g h i j";
    for (int i = 0; i < 10; ++i) {
        rows.push_back({"clean" + std::to_string(i),
                        "w" + std::to_string(i) + " x" + std::to_string(i * 3) + " y z k l m n o p"});
    }
    rows.push_back({"dirty0", "noise " + span + " more noise"});
    rows.push_back({"dirty1", span + " trailing"});
    const auto docs = make_docs(rows);
    const auto ref = make_ref({{"question " + span, "answer m n o p q r s t u v"}});

    const std::size_t n = 10;
    const auto once = ngram_filter(docs, ref, n);
    const auto twice = ngram_filter(once, ref, n);
    CHECK(once.size() == twice.size());
    for (const auto& doc : once.documents) {
        for (const auto& item : ref.items) {
            CHECK_FALSE(shares_ngram(doc.text, item.question, n));
            CHECK_FALSE(shares_ngram(doc.text, item.answer, n));
        }
    }
    CHECK(once.size() == 10);  // both dirty docs removed
}

TEST_CASE("tokenize: lowercase, punctuation stripped, unicode whitespace") {
    const auto toks = tokenize("Hello, World!    FOO\tbar.");
    REQUIRE(toks.size() == 4);
    CHECK(toks[0] == "hello");
    CHECK(toks[1] == "world");
    CHECK(toks[2] == "foo");
    CHECK(toks[3] == "bar");
}

TEST_CASE("pool round-trip: empty") {
    TempDir tmp;
    const auto path = tmp.file("pool.eqpool");
    ExtractionPool pool;
    persist_pool(pool, path);
    const auto loaded = load_pool(path);
    CHECK(loaded.size() == 0);
}

TEST_CASE("pool round-trip: 5 pairs, identical manifest bytes") {
    TempDir tmp;
    const auto path = tmp.file("pool.eqpool");
    ExtractionPool pool;
    for (int i = 0; i < 5; ++i) {
        QAPair pair{"p" + std::to_string(i), "d" + std::to_string(i / 2),
                    "question " + std::to_string(i) + "?", "answer " + std::to_string(i)};
        pool.append(pair, i % 3);
    }
    persist_pool(pool, path);
    const auto first = read_file(path);

    const auto loaded = load_pool(path);
    REQUIRE(loaded.size() == 5);
    CHECK(loaded.provenance() == pool.provenance());
    CHECK(loaded.docs_consumed() == pool.docs_consumed());
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(loaded.entries()[i].pair.id == pool.entries()[i].pair.id);
        CHECK(loaded.entries()[i].pair.question == pool.entries()[i].pair.question);
        CHECK(loaded.entries()[i].cluster_id == pool.entries()[i].cluster_id);
    }

    const auto again = tmp.file("pool2.eqpool");
    persist_pool(loaded, again);
    CHECK(read_file(again) == first);
}

TEST_CASE("pool load rejects truncation and corruption") {
    TempDir tmp;
    const auto path = tmp.file("pool.eqpool");
    ExtractionPool pool;
    pool.append({"p0", "d0", "q?", "a"}, 0);
    pool.append({"p1", "d0", "q2?", "a2"}, 0);
    persist_pool(pool, path);
    const auto content = read_file(path);

    // drop the last record line
    const auto cut = content.rfind("{\"answer\"");
    write_file(path, content.substr(0, cut));
    CHECK_THROWS_WITH_AS(load_pool(path), doctest::Contains("corrupted"), DataError);

    // flip a byte inside a record
    auto mangled = content;
    mangled[content.find("q2?")] = 'Q';
    write_file(path, mangled);
    CHECK_THROWS_WITH_AS(load_pool(path), doctest::Contains("checksum"), DataError);
}

TEST_CASE("pool append-only semantics") {
    ExtractionPool pool;
    pool.append({"p0", "d0", "q?", "a"}, 0);
    CHECK_THROWS_AS(pool.append({"p0", "d1", "q?", "a"}, 1), DataError);
    pool.consume_doc("void-doc");
    CHECK(pool.contains_doc("void-doc"));
    CHECK(pool.contains_doc("d0"));
    // provenance partitions pair ids
    std::size_t total = 0;
    for (const auto& [cluster, ids] : pool.provenance()) total += ids.size();
    CHECK(total == pool.size());
}

}  // TEST_SUITE
