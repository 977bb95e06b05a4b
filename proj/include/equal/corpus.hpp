#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace equal::corpus {

struct Document {
    std::string id;
    std::string text;
    std::map<std::string, std::string> meta;
};

struct QAPair {
    std::string id;
    std::string doc_id;  // empty for reference items
    std::string question;
    std::string answer;
};

struct DocumentSet {
    std::vector<Document> documents;
    std::string source_path;

    std::size_t size() const { return documents.size(); }
};

struct ReferenceSet {
    std::vector<QAPair> items;
    std::string source_path;

    std::size_t size() const { return items.size(); }
};

// Newline-delimited JSON records: {"id": "...", "text": "...", ...extras}.
// Extra string fields land in Document::meta. Duplicate ids and malformed
// lines are rejected with the offending id / line number.
DocumentSet load_documents(const std::string& path);

// Records need "question" and "answer"; "id" defaults to ref-<index>.
ReferenceSet load_reference(const std::string& path);

void save_documents(const DocumentSet& docs, const std::string& path);

// Drops every document sharing an n-token contiguous span with any reference
// question or answer. Tokenization as equal::tokenize. Order preserved.
DocumentSet ngram_filter(const DocumentSet& docs, const ReferenceSet& ref, std::size_t n);

// Cumulative extracted-pair pool with per-cluster provenance. Cluster id -1
// marks warm-up extractions that precede clustering.
class ExtractionPool {
  public:
    struct Entry {
        QAPair pair;
        int cluster_id;
    };

    void append(QAPair pair, int cluster_id);
    void consume_doc(const std::string& doc_id);

    const std::vector<Entry>& entries() const { return entries_; }
    const std::set<std::string>& docs_consumed() const { return docs_consumed_; }
    std::map<int, std::vector<std::string>> provenance() const;
    std::size_t size() const { return entries_.size(); }
    bool contains_doc(const std::string& doc_id) const { return docs_consumed_.count(doc_id) > 0; }

  private:
    std::vector<Entry> entries_;
    std::set<std::string> docs_consumed_;
    std::set<std::string> pair_ids_;
};

// Manifest: header "EQPOOL 1 <count> <checksum-hex>" then one JSON record per
// pair. Checksum is FNV-1a over the concatenated record lines (no newlines).
void persist_pool(const ExtractionPool& pool, const std::string& path);
ExtractionPool load_pool(const std::string& path);

}  // namespace equal::corpus
