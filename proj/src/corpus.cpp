#include "equal/corpus.hpp"

#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "equal/common.hpp"
#include "equal/error.hpp"

namespace equal::corpus {

using nlohmann::json;

namespace {

json parse_record(const std::string& line, const std::string& path, std::size_t lineno) {
    json rec;
    try {
        rec = json::parse(line);
    } catch (const json::parse_error& e) {
        throw DataError(path + ":" + std::to_string(lineno) + ": malformed record: " + e.what());
    }
    if (!rec.is_object()) {
        throw DataError(path + ":" + std::to_string(lineno) + ": record is not an object");
    }
    return rec;
}

std::string require_string(const json& rec, const char* key, const std::string& path, std::size_t lineno) {
    if (!rec.contains(key) || !rec[key].is_string()) {
        throw DataError(path + ":" + std::to_string(lineno) + ": missing string field \"" + key + "\"");
    }
    return rec[key].get<std::string>();
}

bool blank(const std::string& line) {
    for (char c : line) {
        if (c != ' ' && c != '\t' && c != '\r') return false;
    }
    return true;
}

std::ifstream open_input(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open " + path);
    return in;
}

// All n-grams inside one token sequence.
void collect_ngrams(const std::vector<std::string>& tokens, std::size_t n,
                    std::unordered_set<std::uint64_t>& out) {
    if (tokens.size() < n) return;
    for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
        out.insert(ngram_hash(tokens, i, n));
    }
}

}  // namespace

DocumentSet load_documents(const std::string& path) {
    auto in = open_input(path);
    DocumentSet set;
    set.source_path = path;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        const json rec = parse_record(line, path, lineno);
        Document doc;
        doc.id = require_string(rec, "id", path, lineno);
        doc.text = require_string(rec, "text", path, lineno);
        if (doc.id.empty()) {
            throw DataError(path + ":" + std::to_string(lineno) + ": empty document id");
        }
        if (doc.text.empty()) {
            throw DataError(path + ":" + std::to_string(lineno) + ": empty text for document \"" + doc.id + "\"");
        }
        if (!seen.insert(doc.id).second) {
            throw DataError(path + ":" + std::to_string(lineno) + ": duplicate document id \"" + doc.id + "\"");
        }
        for (const auto& [key, value] : rec.items()) {
            if (key == "id" || key == "text") continue;
            if (value.is_string()) doc.meta[key] = value.get<std::string>();
        }
        set.documents.push_back(std::move(doc));
    }
    return set;
}

ReferenceSet load_reference(const std::string& path) {
    auto in = open_input(path);
    ReferenceSet set;
    set.source_path = path;
    std::unordered_set<std::string> seen;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        const json rec = parse_record(line, path, lineno);
        QAPair item;
        item.question = require_string(rec, "question", path, lineno);
        item.answer = require_string(rec, "answer", path, lineno);
        if (item.question.empty() || item.answer.empty()) {
            throw DataError(path + ":" + std::to_string(lineno) + ": empty question or answer");
        }
        item.id = rec.contains("id") && rec["id"].is_string() ? rec["id"].get<std::string>()
                                                              : "ref-" + std::to_string(set.items.size());
        if (!seen.insert(item.id).second) {
            throw DataError(path + ":" + std::to_string(lineno) + ": duplicate reference id \"" + item.id + "\"");
        }
        if (rec.contains("doc_id") && rec["doc_id"].is_string()) {
            item.doc_id = rec["doc_id"].get<std::string>();
        }
        set.items.push_back(std::move(item));
    }
    return set;
}

void save_documents(const DocumentSet& docs, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    for (const auto& doc : docs.documents) {
        json rec;
        rec["id"] = doc.id;
        rec["text"] = doc.text;
        for (const auto& [k, v] : doc.meta) rec[k] = v;
        out << rec.dump() << '\n';
    }
    if (!out) throw DataError("write failed for " + path);
}

DocumentSet ngram_filter(const DocumentSet& docs, const ReferenceSet& ref, std::size_t n) {
    if (n < 2) throw ConfigError("ngram_filter requires n >= 2");
    std::unordered_set<std::uint64_t> contaminated;
    for (const auto& item : ref.items) {
        collect_ngrams(tokenize(item.question), n, contaminated);
        collect_ngrams(tokenize(item.answer), n, contaminated);
    }
    DocumentSet kept;
    kept.source_path = docs.source_path;
    for (const auto& doc : docs.documents) {
        const auto tokens = tokenize(doc.text);
        bool hit = false;
        if (tokens.size() >= n && !contaminated.empty()) {
            for (std::size_t i = 0; i + n <= tokens.size() && !hit; ++i) {
                hit = contaminated.count(ngram_hash(tokens, i, n)) > 0;
            }
        }
        if (!hit) kept.documents.push_back(doc);
    }
    return kept;
}

void ExtractionPool::append(QAPair pair, int cluster_id) {
    if (pair.id.empty()) throw DataError("pool pair with empty id");
    if (pair.question.empty() || pair.answer.empty()) {
        throw DataError("pool pair \"" + pair.id + "\" has empty question or answer");
    }
    if (!pair_ids_.insert(pair.id).second) {
        throw DataError("duplicate pool pair id \"" + pair.id + "\"");
    }
    if (!pair.doc_id.empty()) docs_consumed_.insert(pair.doc_id);
    entries_.push_back(Entry{std::move(pair), cluster_id});
}

void ExtractionPool::consume_doc(const std::string& doc_id) {
    docs_consumed_.insert(doc_id);
}

std::map<int, std::vector<std::string>> ExtractionPool::provenance() const {
    std::map<int, std::vector<std::string>> prov;
    for (const auto& entry : entries_) {
        prov[entry.cluster_id].push_back(entry.pair.id);
    }
    return prov;
}

namespace {

std::string pool_record_line(const ExtractionPool::Entry& entry) {
    json rec;
    rec["id"] = entry.pair.id;
    rec["doc_id"] = entry.pair.doc_id;
    rec["question"] = entry.pair.question;
    rec["answer"] = entry.pair.answer;
    rec["cluster"] = entry.cluster_id;
    return rec.dump();
}

}  // namespace

void persist_pool(const ExtractionPool& pool, const std::string& path) {
    std::vector<std::string> lines;
    lines.reserve(pool.size());
    std::uint64_t checksum = kFnvOffset;
    for (const auto& entry : pool.entries()) {
        lines.push_back(pool_record_line(entry));
        checksum = fnv1a(lines.back(), checksum);
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << "EQPOOL 1 " << lines.size() << ' ' << to_hex(checksum) << '\n';
    for (const auto& line : lines) out << line << '\n';
    if (!out) throw DataError("write failed for " + path);
}

ExtractionPool load_pool(const std::string& path) {
    auto in = open_input(path);
    std::string header;
    if (!std::getline(in, header)) throw DataError(path + ": empty pool manifest");
    std::istringstream hs(header);
    std::string magic;
    int version = 0;
    std::size_t count = 0;
    std::string checksum_hex;
    hs >> magic >> version >> count >> checksum_hex;
    if (!hs || magic != "EQPOOL" || version != 1) {
        throw DataError(path + ": bad pool manifest header");
    }
    ExtractionPool pool;
    std::uint64_t checksum = kFnvOffset;
    std::string line;
    std::size_t lineno = 1;
    std::size_t records = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (blank(line)) continue;
        checksum = fnv1a(line, checksum);
        const json rec = parse_record(line, path, lineno);
        QAPair pair;
        pair.id = require_string(rec, "id", path, lineno);
        pair.doc_id = require_string(rec, "doc_id", path, lineno);
        pair.question = require_string(rec, "question", path, lineno);
        pair.answer = require_string(rec, "answer", path, lineno);
        if (!rec.contains("cluster") || !rec["cluster"].is_number_integer()) {
            throw DataError(path + ":" + std::to_string(lineno) + ": missing cluster field");
        }
        pool.append(std::move(pair), rec["cluster"].get<int>());
        ++records;
    }
    if (records != count) {
        throw DataError(path + ": corrupted pool manifest: expected " + std::to_string(count) +
                        " records, found " + std::to_string(records));
    }
    if (to_hex(checksum) != checksum_hex) {
        throw DataError(path + ": corrupted pool manifest: checksum mismatch");
    }
    return pool;
}

}  // namespace equal::corpus
