#include "sp2p/search_index.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <set>
#include <system_error>

namespace sp2p {

namespace fs = std::filesystem;

const char* to_string(FileError e) {
  switch (e) {
    case FileError::NotFound:
      return "not found";
    case FileError::OutsideSandbox:
      return "outside sandbox";
    case FileError::Unsupported:
      return "unsupported file type";
    case FileError::ReadError:
      return "read error";
    case FileError::BadOffset:
      return "bad offset";
    case FileError::Timeout:
      return "timed out";
    case FileError::TooManyRetries:
      return "too many retries";
    case FileError::ChecksumMismatch:
      return "checksum mismatch";
    case FileError::TooLarge:
      return "file too large";
  }
  return "unknown file error";
}

// --- sandbox ----------------------------------------------------------------

Result<SandboxRoot, std::string> SandboxRoot::open(const std::string& dir) {
  std::error_code ec;
  fs::path canon = fs::canonical(dir, ec);
  if (ec) {
    return std::string("cannot open sandbox root '") + dir +
           "': " + ec.message();
  }
  if (!fs::is_directory(canon, ec) || ec) {
    return std::string("sandbox root '") + dir + "' is not a directory";
  }
  return SandboxRoot(std::move(canon));
}

namespace {

bool path_within(const fs::path& base, const fs::path& p) {
  auto bi = base.begin(), be = base.end();
  auto pi = p.begin(), pe = p.end();
  for (; bi != be; ++bi, ++pi) {
    if (pi == pe || *pi != *bi) return false;
  }
  return true;
}

}  // namespace

Result<fs::path, FileError> SandboxRoot::resolve(std::string_view rel) const {
  fs::path r{std::string(rel)};
  if (r.is_absolute()) return FileError::OutsideSandbox;
  for (const auto& part : r) {
    // ".." is rejected outright rather than normalized: a path that tries
    // to climb is hostile whether or not it would land back inside.
    if (part == "..") return FileError::OutsideSandbox;
  }
  fs::path joined = root_ / r;
  std::error_code ec;
  fs::path canon = fs::canonical(joined, ec);
  if (ec) {
    if (ec == std::errc::no_such_file_or_directory ||
        ec == std::errc::not_a_directory) {
      // The entry may not exist, but if its name alone escapes the root we
      // still report the containment violation.
      fs::path lexical = joined.lexically_normal();
      if (!path_within(root_, lexical)) return FileError::OutsideSandbox;
      return FileError::NotFound;
    }
    return FileError::ReadError;
  }
  if (!path_within(root_, canon)) return FileError::OutsideSandbox;
  return canon;
}

// --- extractors -------------------------------------------------------------

namespace {

Result<std::string, FileError> read_file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) return FileError::ReadError;
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  if (f.bad()) return FileError::ReadError;
  return data;
}

void append_utf8(std::string& out, std::uint32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp <= 0x10FFFF) {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

// Decodes one "&...;" entity starting at `i` (which points at '&').
// Returns the decoded text and advances `i` past the entity, or returns "&"
// and advances by one when it is not a recognized entity.
std::string decode_entity(std::string_view s, std::size_t& i) {
  std::size_t end = s.find(';', i);
  if (end == std::string_view::npos || end - i > 12) {
    ++i;
    return "&";
  }
  std::string_view body = s.substr(i + 1, end - i - 1);
  std::string out;
  if (body == "amp") {
    out = "&";
  } else if (body == "lt") {
    out = "<";
  } else if (body == "gt") {
    out = ">";
  } else if (body == "quot") {
    out = "\"";
  } else if (body == "apos") {
    out = "'";
  } else if (body == "nbsp") {
    out = " ";
  } else if (!body.empty() && body[0] == '#') {
    std::uint32_t cp = 0;
    bool ok = body.size() > 1;
    if (body.size() > 2 && (body[1] == 'x' || body[1] == 'X')) {
      for (std::size_t j = 2; j < body.size() && ok; ++j) {
        char c = body[j];
        std::uint32_t d;
        if (c >= '0' && c <= '9') d = c - '0';
        else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
        else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
        else { ok = false; break; }
        cp = cp * 16 + d;
        if (cp > 0x10FFFF) ok = false;
      }
    } else {
      for (std::size_t j = 1; j < body.size() && ok; ++j) {
        if (body[j] < '0' || body[j] > '9') { ok = false; break; }
        cp = cp * 10 + (body[j] - '0');
        if (cp > 0x10FFFF) ok = false;
      }
    }
    if (!ok || cp == 0) {
      ++i;
      return "&";
    }
    append_utf8(out, cp);
  } else {
    ++i;
    return "&";
  }
  i = end + 1;
  return out;
}

bool iequals(std::string_view a, std::string_view b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (std::tolower(static_cast<unsigned char>(a[i])) !=
        std::tolower(static_cast<unsigned char>(b[i]))) {
      return false;
    }
  }
  return true;
}

}  // namespace

std::string strip_html(std::string_view html) {
  std::string out;
  out.reserve(html.size());
  std::size_t i = 0;
  while (i < html.size()) {
    char c = html[i];
    if (c == '<') {
      // Comments vanish but still separate the words around them.
      if (html.substr(i).rfind("<!--", 0) == 0) {
        std::size_t end = html.find("-->", i + 4);
        i = (end == std::string_view::npos) ? html.size() : end + 3;
        out.push_back(' ');
        continue;
      }
      std::size_t end = html.find('>', i);
      if (end == std::string_view::npos) break;  // unterminated tag: drop rest
      std::string_view tag = html.substr(i + 1, end - i - 1);
      bool closing = !tag.empty() && tag[0] == '/';
      std::string_view name = closing ? tag.substr(1) : tag;
      std::size_t name_end = 0;
      while (name_end < name.size() &&
             (std::isalnum(static_cast<unsigned char>(name[name_end])))) {
        ++name_end;
      }
      name = name.substr(0, name_end);
      i = end + 1;
      if (!closing && (iequals(name, "script") || iequals(name, "style"))) {
        // Skip to the matching close tag; its body is not document text,
        // but the block still separates its neighbors.
        out.push_back(' ');
        std::string close = "</";
        close.append(name.begin(), name.end());
        std::size_t at = i;
        std::size_t found = std::string_view::npos;
        while (at < html.size()) {
          std::size_t cand = html.find('<', at);
          if (cand == std::string_view::npos) break;
          if (cand + close.size() <= html.size() &&
              iequals(html.substr(cand, close.size()), close)) {
            found = cand;
            break;
          }
          at = cand + 1;
        }
        if (found == std::string_view::npos) break;
        std::size_t close_end = html.find('>', found);
        i = (close_end == std::string_view::npos) ? html.size()
                                                  : close_end + 1;
      } else {
        // Tags separate words: "<p>a</p><p>b</p>" must not fuse "ab".
        out.push_back(' ');
      }
    } else if (c == '&') {
      out += decode_entity(html, i);
    } else {
      out.push_back(c);
      ++i;
    }
  }
  return out;
}

ExtractorRegistry ExtractorRegistry::builtin() {
  ExtractorRegistry reg;
  auto plain = [](const fs::path& p) { return read_file_bytes(p); };
  auto html = [](const fs::path& p) -> Result<std::string, FileError> {
    auto raw = read_file_bytes(p);
    if (!raw) return raw.error();
    return strip_html(raw.value());
  };
  reg.register_extension(".txt", plain);
  reg.register_extension(".md", plain);
  reg.register_extension(".html", html);
  reg.register_extension(".htm", html);
  return reg;
}

void ExtractorRegistry::register_extension(std::string ext, Extractor fn) {
  for (char& c : ext) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  by_ext_[std::move(ext)] = std::move(fn);
}

namespace {

std::string lower_extension(const fs::path& p) {
  std::string ext = p.extension().string();
  for (char& c : ext) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return ext;
}

}  // namespace

bool ExtractorRegistry::supports(const fs::path& p) const {
  return by_ext_.count(lower_extension(p)) > 0;
}

Result<std::string, FileError> ExtractorRegistry::extract(
    const fs::path& p) const {
  auto it = by_ext_.find(lower_extension(p));
  if (it == by_ext_.end()) return FileError::Unsupported;
  return it->second(p);
}

// --- tokenizer --------------------------------------------------------------

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (cur.size() >= 2 && cur.size() <= 40) out.push_back(cur);
    cur.clear();
  };
  for (char ch : text) {
    unsigned char c = static_cast<unsigned char>(ch);
    if (c < 0x80 && std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else {
      flush();
    }
  }
  flush();
  return out;
}

// --- index ------------------------------------------------------------------

void InvertedIndex::add_document(std::string rel_path, std::string_view text,
                                 std::uint64_t size, std::int64_t mtime) {
  std::uint32_t id = static_cast<std::uint32_t>(docs_.size());
  auto tokens = tokenize(text);
  std::map<std::string, std::uint32_t> tf;
  for (auto& t : tokens) ++tf[t];
  for (auto& [term, n] : tf) {
    terms_[term].push_back(Posting{id, n});
  }
  docs_.push_back(DocRecord{id, std::move(rel_path), size,
                            static_cast<std::uint32_t>(tokens.size()), mtime});
}

const std::vector<Posting>* InvertedIndex::postings(
    const std::string& term) const {
  auto it = terms_.find(term);
  return it == terms_.end() ? nullptr : &it->second;
}

std::vector<ScoredDoc> InvertedIndex::search(
    std::span<const std::string> keywords, std::size_t k,
    SearchMode mode) const {
  std::vector<ScoredDoc> out;
  if (k == 0 || docs_.empty()) return out;

  std::vector<std::string> uniq(keywords.begin(), keywords.end());
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  if (uniq.empty()) return out;

  const double n_docs = static_cast<double>(docs_.size());
  std::vector<double> score(docs_.size(), 0.0);
  std::vector<std::uint32_t> matched(docs_.size(), 0);

  for (const auto& term : uniq) {
    auto it = terms_.find(term);
    if (it == terms_.end()) continue;
    const auto& posts = it->second;
    double idf = std::log(1.0 + n_docs / static_cast<double>(posts.size()));
    for (const auto& p : posts) {
      score[p.doc_id] += static_cast<double>(p.tf) * idf;
      ++matched[p.doc_id];
    }
  }

  const std::uint32_t want =
      mode == SearchMode::And ? static_cast<std::uint32_t>(uniq.size()) : 1;
  for (std::uint32_t d = 0; d < docs_.size(); ++d) {
    if (matched[d] >= want) {
      out.push_back(ScoredDoc{d, std::llround(score[d] * 1e6)});
    }
  }
  std::sort(out.begin(), out.end(), [](const ScoredDoc& a, const ScoredDoc& b) {
    if (a.score_micros != b.score_micros) {
      return a.score_micros > b.score_micros;
    }
    return a.doc_id < b.doc_id;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

// --- disk image -------------------------------------------------------------
//
// "SIDX" 0x01
//   u32 doc_count, then per document:
//     u16 path_len + path, u64 size, u32 token_count, u64 mtime (two's compl.)
//   u32 term_count, then per term in ascending byte order:
//     u16 term_len + term, u32 posting_count, (u32 doc_id, u32 tf)*
// "XDIS"

namespace {

void put_u16(std::vector<std::uint8_t>& v, std::uint16_t x) {
  v.push_back(static_cast<std::uint8_t>(x >> 8));
  v.push_back(static_cast<std::uint8_t>(x));
}

void put_u32(std::vector<std::uint8_t>& v, std::uint32_t x) {
  for (int s = 24; s >= 0; s -= 8) v.push_back(static_cast<std::uint8_t>(x >> s));
}

void put_u64(std::vector<std::uint8_t>& v, std::uint64_t x) {
  for (int s = 56; s >= 0; s -= 8) v.push_back(static_cast<std::uint8_t>(x >> s));
}

struct SidxReader {
  std::span<const std::uint8_t> in;
  std::size_t pos = 0;
  bool ok = true;

  bool need(std::size_t n) {
    if (!ok || in.size() - pos < n) {
      ok = false;
      return false;
    }
    return true;
  }
  std::uint16_t u16() {
    if (!need(2)) return 0;
    std::uint16_t v = static_cast<std::uint16_t>((in[pos] << 8) | in[pos + 1]);
    pos += 2;
    return v;
  }
  std::uint32_t u32() {
    if (!need(4)) return 0;
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v = (v << 8) | in[pos + i];
    pos += 4;
    return v;
  }
  std::uint64_t u64() {
    if (!need(8)) return 0;
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v = (v << 8) | in[pos + i];
    pos += 8;
    return v;
  }
  std::string str() {
    std::uint16_t len = u16();
    if (!need(len)) return {};
    std::string s(reinterpret_cast<const char*>(in.data() + pos), len);
    pos += len;
    return s;
  }
};

}  // namespace

std::vector<std::uint8_t> InvertedIndex::serialize() const {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), {'S', 'I', 'D', 'X'});
  out.push_back(0x01);
  put_u32(out, static_cast<std::uint32_t>(docs_.size()));
  for (const auto& d : docs_) {
    put_u16(out, static_cast<std::uint16_t>(d.rel_path.size()));
    out.insert(out.end(), d.rel_path.begin(), d.rel_path.end());
    put_u64(out, d.size);
    put_u32(out, d.token_count);
    put_u64(out, static_cast<std::uint64_t>(d.mtime));
  }
  put_u32(out, static_cast<std::uint32_t>(terms_.size()));
  for (const auto& [term, posts] : terms_) {
    put_u16(out, static_cast<std::uint16_t>(term.size()));
    out.insert(out.end(), term.begin(), term.end());
    put_u32(out, static_cast<std::uint32_t>(posts.size()));
    for (const auto& p : posts) {
      put_u32(out, p.doc_id);
      put_u32(out, p.tf);
    }
  }
  out.insert(out.end(), {'X', 'D', 'I', 'S'});
  return out;
}

Result<InvertedIndex, std::string> InvertedIndex::deserialize(
    std::span<const std::uint8_t> bytes) {
  SidxReader r{bytes};
  if (!r.need(5) || bytes[0] != 'S' || bytes[1] != 'I' || bytes[2] != 'D' ||
      bytes[3] != 'X') {
    return std::string("not an index image");
  }
  if (bytes[4] != 0x01) return std::string("unsupported index version");
  r.pos = 5;

  InvertedIndex idx;
  std::uint32_t ndocs = r.u32();
  for (std::uint32_t i = 0; i < ndocs && r.ok; ++i) {
    DocRecord d;
    d.doc_id = i;
    d.rel_path = r.str();
    d.size = r.u64();
    d.token_count = r.u32();
    d.mtime = static_cast<std::int64_t>(r.u64());
    idx.docs_.push_back(std::move(d));
  }
  std::uint32_t nterms = r.u32();
  std::string prev;
  for (std::uint32_t i = 0; i < nterms && r.ok; ++i) {
    std::string term = r.str();
    if (i > 0 && term <= prev) return std::string("terms out of order");
    std::uint32_t nposts = r.u32();
    std::vector<Posting> posts;
    posts.reserve(std::min<std::uint32_t>(nposts, 4096));
    for (std::uint32_t j = 0; j < nposts && r.ok; ++j) {
      Posting p{r.u32(), r.u32()};
      if (p.doc_id >= ndocs) return std::string("posting references bad doc");
      posts.push_back(p);
    }
    if (r.ok) idx.terms_.emplace(term, std::move(posts));
    prev = std::move(term);
  }
  if (!r.need(4) || bytes[r.pos] != 'X' || bytes[r.pos + 1] != 'D' ||
      bytes[r.pos + 2] != 'I' || bytes[r.pos + 3] != 'S') {
    return std::string("truncated index image");
  }
  r.pos += 4;
  if (r.pos != bytes.size()) return std::string("trailing bytes in index image");
  return idx;
}

Result<Unit, std::string> InvertedIndex::save(const fs::path& file) const {
  auto bytes = serialize();
  // Write-then-rename so a crash mid-write never leaves a torn image.
  fs::path tmp = file;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) return std::string("cannot write ") + tmp.string();
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f.good()) return std::string("short write to ") + tmp.string();
  }
  std::error_code ec;
  fs::rename(tmp, file, ec);
  if (ec) return std::string("cannot rename index image: ") + ec.message();
  return Unit{};
}

Result<InvertedIndex, std::string> InvertedIndex::load(const fs::path& file) {
  std::ifstream f(file, std::ios::binary);
  if (!f) return std::string("cannot read ") + file.string();
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

// --- directory walk ---------------------------------------------------------

namespace {

std::int64_t mtime_seconds(const fs::path& p) {
  std::error_code ec;
  auto t = fs::last_write_time(p, ec);
  if (ec) return 0;
  auto sys = std::chrono::file_clock::to_sys(t);
  return std::chrono::duration_cast<std::chrono::seconds>(
             sys.time_since_epoch())
      .count();
}

}  // namespace

Result<InvertedIndex, std::string> build_index(
    const SandboxRoot& root, const ExtractorRegistry& reg,
    std::vector<std::string>* skipped) {
  InvertedIndex idx;
  std::set<fs::path> visited_dirs;
  auto note_skip = [&](const std::string& rel) {
    if (skipped) skipped->push_back(rel);
  };

  // Manual breadth walk with sorted entries so document ids are stable for
  // a given tree, regardless of directory iteration order.
  std::vector<std::string> pending{""};
  std::error_code ec;
  visited_dirs.insert(fs::canonical(root.root(), ec));
  while (!pending.empty()) {
    std::string rel_dir = pending.front();
    pending.erase(pending.begin());
    fs::path abs_dir = rel_dir.empty() ? root.root() : root.root() / rel_dir;

    std::vector<fs::directory_entry> entries;
    for (auto it = fs::directory_iterator(abs_dir, ec);
         !ec && it != fs::directory_iterator(); it.increment(ec)) {
      entries.push_back(*it);
    }
    if (ec) return std::string("cannot list ") + abs_dir.string();
    std::sort(entries.begin(), entries.end(),
              [](const fs::directory_entry& a, const fs::directory_entry& b) {
                return a.path().filename() < b.path().filename();
              });

    for (const auto& entry : entries) {
      std::string name = entry.path().filename().string();
      std::string rel = rel_dir.empty() ? name : rel_dir + "/" + name;
      auto resolved = root.resolve(rel);
      if (!resolved) {
        // Symlinks wandering out of the sandbox are not indexed.
        note_skip(rel);
        continue;
      }
      const fs::path& target = resolved.value();
      if (fs::is_directory(target, ec) && !ec) {
        // A symlink cycle would revisit a directory; walk each one once.
        if (visited_dirs.insert(target).second) pending.push_back(rel);
        continue;
      }
      if (!fs::is_regular_file(target, ec) || ec) {
        note_skip(rel);
        continue;
      }
      if (!reg.supports(target)) {
        note_skip(rel);
        continue;
      }
      auto text = reg.extract(target);
      if (!text) {
        note_skip(rel);
        continue;
      }
      std::uint64_t size = fs::file_size(target, ec);
      if (ec) size = 0;
      idx.add_document(rel, text.value(), size, mtime_seconds(target));
    }
  }
  return idx;
}

// --- snippets ----------------------------------------------------------------

std::string make_snippet(std::string_view text,
                         std::span<const std::string> keywords) {
  std::string lowered(text);
  for (char& c : lowered) {
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  std::size_t best = std::string_view::npos;
  for (const auto& k : keywords) {
    if (k.empty()) continue;
    std::size_t at = lowered.find(k);
    if (at != std::string_view::npos && (best == std::string_view::npos ||
                                         at < best)) {
      best = at;
    }
  }
  std::size_t start = 0;
  if (best != std::string_view::npos) {
    start = best > 40 ? best - 40 : 0;
  }
  std::string out;
  out.reserve(kSnippetBytes);
  bool in_space = false;
  for (std::size_t i = start; i < text.size() && out.size() < kSnippetBytes;
       ++i) {
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (std::isspace(c)) {
      in_space = true;
      continue;
    }
    if (in_space && !out.empty() && out.size() + 1 < kSnippetBytes) {
      out.push_back(' ');
    }
    in_space = false;
    out.push_back(static_cast<char>(c));
  }
  // Trim any partial UTF-8 sequence left at the cut point.
  while (!out.empty() && !is_valid_utf8(out)) out.pop_back();
  return out;
}

}  // namespace sp2p
