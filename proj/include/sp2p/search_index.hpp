#ifndef SP2P_SEARCH_INDEX_HPP
#define SP2P_SEARCH_INDEX_HPP

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sp2p/result.hpp"
#include "sp2p/wire.hpp"

namespace sp2p {

enum class FileError {
  NotFound,
  OutsideSandbox,
  Unsupported,
  ReadError,
  BadOffset,
  Timeout,
  TooManyRetries,
  ChecksumMismatch,
  TooLarge,
};

const char* to_string(FileError e);

// Confines every file operation to one directory tree. Relative paths are
// resolved against the root and verified, after symlink resolution, to still
// be inside it; anything else is rejected.
class SandboxRoot {
 public:
  static Result<SandboxRoot, std::string> open(const std::string& dir);

  const std::filesystem::path& root() const { return root_; }

  // Resolves `rel` ("" = the root itself) to an absolute path inside the
  // sandbox. Fails with OutsideSandbox for absolute paths, ".." segments or
  // symlinks leading out, NotFound when the entry does not exist.
  Result<std::filesystem::path, FileError> resolve(std::string_view rel) const;

 private:
  explicit SandboxRoot(std::filesystem::path root) : root_(std::move(root)) {}

  std::filesystem::path root_;
};

// Extracts plain text from one file format.
using Extractor =
    std::function<Result<std::string, FileError>(const std::filesystem::path&)>;

class ExtractorRegistry {
 public:
  // .txt and .md read as-is; .html/.htm get tags stripped and entities
  // decoded. Everything else is unsupported and skipped by indexing.
  static ExtractorRegistry builtin();

  void register_extension(std::string ext, Extractor fn);
  bool supports(const std::filesystem::path& p) const;
  Result<std::string, FileError> extract(const std::filesystem::path& p) const;

 private:
  std::map<std::string, Extractor> by_ext_;
};

// Removes markup from HTML: tags dropped, <script>/<style> bodies dropped,
// character entities decoded. Exposed for tests.
std::string strip_html(std::string_view html);

// Splits text into lowercase ASCII alphanumeric runs, keeping tokens of
// 2..40 characters. No stemming, no stop words.
std::vector<std::string> tokenize(std::string_view text);

struct DocRecord {
  std::uint32_t doc_id = 0;
  std::string rel_path;
  std::uint64_t size = 0;        // bytes on disk
  std::uint32_t token_count = 0;
  std::int64_t mtime = 0;        // seconds since the Unix epoch
};

struct Posting {
  std::uint32_t doc_id = 0;
  std::uint32_t tf = 0;

  friend bool operator==(const Posting&, const Posting&) = default;
};

struct ScoredDoc {
  std::uint32_t doc_id = 0;
  std::int64_t score_micros = 0;

  friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

// TF-IDF ranked retrieval over the documents fed to it. Scores use
// score(d) = sum over matched terms t of tf(t,d) * ln(1 + N/df(t)),
// reported as integers in millionths so ordering is reproducible.
class InvertedIndex {
 public:
  // Tokenizes `text` and appends the document. rel_paths must be unique.
  void add_document(std::string rel_path, std::string_view text,
                    std::uint64_t size = 0, std::int64_t mtime = 0);

  // With mode Or a document matches if any keyword occurs; with And all
  // keywords must occur. At most k results, score descending, doc_id
  // ascending on ties.
  std::vector<ScoredDoc> search(std::span<const std::string> keywords,
                                std::size_t k, SearchMode mode) const;

  std::size_t doc_count() const { return docs_.size(); }
  const DocRecord& doc(std::uint32_t id) const { return docs_[id]; }
  const std::vector<Posting>* postings(const std::string& term) const;
  std::size_t term_count() const { return terms_.size(); }

  // Deterministic binary image of the index ("SIDX" format, see README).
  std::vector<std::uint8_t> serialize() const;
  static Result<InvertedIndex, std::string> deserialize(
      std::span<const std::uint8_t> bytes);

  Result<Unit, std::string> save(const std::filesystem::path& file) const;
  static Result<InvertedIndex, std::string> load(
      const std::filesystem::path& file);

 private:
  std::vector<DocRecord> docs_;
  std::map<std::string, std::vector<Posting>> terms_;
};

// Walks the sandbox, extracts every supported file and builds the index.
// Files an extractor rejects and entries leading outside the sandbox are
// skipped; their paths go to `skipped` when given.
Result<InvertedIndex, std::string> build_index(
    const SandboxRoot& root, const ExtractorRegistry& reg,
    std::vector<std::string>* skipped = nullptr);

// Short plain-text excerpt around the first keyword occurrence, at most
// kSnippetBytes bytes, cut on a UTF-8 boundary.
std::string make_snippet(std::string_view text,
                         std::span<const std::string> keywords);

}  // namespace sp2p

#endif  // SP2P_SEARCH_INDEX_HPP
