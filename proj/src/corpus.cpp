#include "kbc/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include "json.hpp"

#include "kbc/text_util.hpp"

namespace kbc {

using json = nlohmann::json;

const char* to_string(LinkMethod m) { return m == LinkMethod::kSubgraph ? "subgraph" : "context"; }

LinkMethod link_method_from_string(const std::string& s) {
  if (s == "subgraph") return LinkMethod::kSubgraph;
  if (s == "context") return LinkMethod::kContext;
  throw Error("unknown link method '" + s + "'");
}

std::string Sentence::surface(int start, int end) const {
  std::string out;
  for (int i = start; i <= end; ++i) {
    if (i > start) out += ' ';
    out += tokens[i].surface;
  }
  return out;
}

void validate_sentence(const Sentence& s) {
  auto fail = [&](const std::string& what) { throw CorpusError("sentence '" + s.id + "': " + what); };
  const int n = s.size();
  if (n == 0) fail("no tokens");
  int roots = 0;
  for (int i = 0; i < n; ++i) {
    const auto& t = s.tokens[i];
    if (t.index != i) fail("token index mismatch at " + std::to_string(i));
    if (t.head < -1 || t.head >= n) fail("head out of range at token " + std::to_string(i));
    if (t.head == i) fail("token " + std::to_string(i) + " heads itself");
    if (t.head == -1) ++roots;
  }
  // Every head chain must reach the root without revisiting a node.
  std::vector<int> state(n, 0);  // 0 unseen, 1 on current chain, 2 reaches root
  for (int i = 0; i < n; ++i) {
    std::vector<int> chain;
    int cur = i;
    while (cur != -1 && state[cur] == 0) {
      state[cur] = 1;
      chain.push_back(cur);
      cur = s.tokens[cur].head;
    }
    if (cur != -1 && state[cur] == 1) fail("cyclic dependency heads");
    for (int c : chain) state[c] = 2;
  }
  if (roots != 1) fail("expected exactly one root, found " + std::to_string(roots));
  for (std::size_t a = 0; a < s.spans.size(); ++a) {
    const auto& sp = s.spans[a];
    if (sp.start < 0 || sp.end < sp.start || sp.end >= n) {
      fail("span [" + std::to_string(sp.start) + "," + std::to_string(sp.end) + "] out of range");
    }
    for (std::size_t b = a + 1; b < s.spans.size(); ++b) {
      if (sp.overlaps(s.spans[b])) fail("overlapping spans");
    }
  }
}

Sentence sentence_from_json_line(const std::string& line) {
  json j = json::parse(line);
  Sentence s;
  s.id = j.at("id").get<std::string>();
  auto words = j.at("tokens").get<std::vector<std::string>>();
  const int n = static_cast<int>(words.size());
  std::vector<std::string> pos(n, "UNK");
  if (j.contains("pos") && !j["pos"].is_null()) {
    pos = j["pos"].get<std::vector<std::string>>();
    if (static_cast<int>(pos.size()) != n) throw CorpusError("sentence '" + s.id + "': pos length mismatch");
  }
  std::vector<int> heads(n);
  for (int i = 0; i < n; ++i) heads[i] = i - 1;
  if (j.contains("heads") && !j["heads"].is_null()) {
    heads = j["heads"].get<std::vector<int>>();
    if (static_cast<int>(heads.size()) != n) throw CorpusError("sentence '" + s.id + "': heads length mismatch");
  }
  for (int i = 0; i < n; ++i) s.tokens.push_back({i, words[i], pos[i], heads[i]});
  if (j.contains("spans") && !j["spans"].is_null()) {
    for (const auto& js : j["spans"]) {
      Span sp;
      sp.start = js.at("start").get<int>();
      sp.end = js.at("end").get<int>();
      if (sp.start < 0 || sp.end < sp.start || sp.end >= n) {
        throw CorpusError("sentence '" + s.id + "': span out of range");
      }
      sp.surface = s.surface(sp.start, sp.end);
      if (js.contains("type") && !js["type"].is_null()) sp.type = js["type"].get<std::string>();
      if (js.contains("entity") && !js["entity"].is_null()) sp.entity = js["entity"].get<std::string>();
      if (js.contains("method") && !js["method"].is_null()) {
        sp.method = link_method_from_string(js["method"].get<std::string>());
      }
      s.spans.push_back(std::move(sp));
    }
  }
  validate_sentence(s);
  return s;
}

std::string sentence_to_json_line(const Sentence& s) {
  json j;
  j["id"] = s.id;
  json tokens = json::array(), pos = json::array(), heads = json::array(), spans = json::array();
  for (const auto& t : s.tokens) {
    tokens.push_back(t.surface);
    pos.push_back(t.pos);
    heads.push_back(t.head);
  }
  for (const auto& sp : s.spans) {
    json js;
    js["start"] = sp.start;
    js["end"] = sp.end;
    js["type"] = sp.type ? json(*sp.type) : json(nullptr);
    js["entity"] = sp.entity ? json(*sp.entity) : json(nullptr);
    if (sp.method) js["method"] = to_string(*sp.method);
    spans.push_back(std::move(js));
  }
  j["tokens"] = std::move(tokens);
  j["pos"] = std::move(pos);
  j["heads"] = std::move(heads);
  j["spans"] = std::move(spans);
  return j.dump();
}

std::vector<Sentence> read_corpus(std::istream& in, const std::string& name) {
  std::vector<Sentence> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      out.push_back(sentence_from_json_line(line));
    } catch (const json::exception& e) {
      throw CorpusError(name + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::vector<Sentence> ingest_corpus(const std::filesystem::path& jsonl_file) {
  std::ifstream in(jsonl_file);
  if (!in) throw CorpusError("cannot open corpus " + jsonl_file.string());
  return read_corpus(in, jsonl_file.string());
}

void write_corpus(std::ostream& out, const std::vector<Sentence>& sentences) {
  for (const auto& s : sentences) out << sentence_to_json_line(s) << '\n';
}

void write_corpus(const std::filesystem::path& file, const std::vector<Sentence>& sentences) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  write_corpus(out, sentences);
}

Sentence fallback_parse(const std::string& raw, std::string id) {
  auto words = split_ws(raw);
  if (words.empty()) throw CorpusError("cannot parse empty text");
  Sentence s;
  s.id = std::move(id);
  for (int i = 0; i < static_cast<int>(words.size()); ++i) {
    s.tokens.push_back({i, words[i], "UNK", i - 1});
  }
  return s;
}

Gazetteer::Gazetteer(const KnowledgeBase& kb, bool lowercase) : lowercase_(lowercase) {
  for (const auto& e : kb.entities()) {
    for (const auto& a : e.aliases) add(a, e.id);
  }
}

std::string Gazetteer::key(const std::string& s) const {
  auto joined = join(split_ws(s), " ");
  return lowercase_ ? to_lower(joined) : joined;
}

void Gazetteer::add(const std::string& alias, const EntityId& entity) {
  auto k = key(alias);
  if (k.empty()) return;
  auto& ids = entries_[k];
  auto it = std::lower_bound(ids.begin(), ids.end(), entity);
  if (it == ids.end() || *it != entity) ids.insert(it, entity);
  max_ngram_ = std::max(max_ngram_, static_cast<int>(split_ws(k).size()));
}

const std::vector<EntityId>& Gazetteer::lookup(const std::string& surface) const {
  static const std::vector<EntityId> kEmpty;
  auto it = entries_.find(key(surface));
  return it == entries_.end() ? kEmpty : it->second;
}

bool Gazetteer::contains(const std::string& surface) const { return entries_.count(key(surface)) != 0; }

std::vector<Span> longest_ngram_match(const Sentence& sentence, const Gazetteer& gazetteer) {
  std::vector<Span> out;
  const int n = sentence.size();
  int i = 0;
  while (i < n) {
    int best_len = 0;
    for (int len = std::min(gazetteer.max_ngram(), n - i); len >= 1; --len) {
      if (gazetteer.contains(sentence.surface(i, i + len - 1))) {
        best_len = len;
        break;
      }
    }
    if (best_len == 0) {
      ++i;
      continue;
    }
    Span sp;
    sp.start = i;
    sp.end = i + best_len - 1;
    sp.surface = sentence.surface(sp.start, sp.end);
    out.push_back(std::move(sp));
    i += best_len;
  }
  return out;
}

int span_anchor(const Span& span, SdpAnchor anchor) {
  return anchor == SdpAnchor::kLast ? span.end : span.start;
}

std::vector<int> shortest_dependency_path(const Sentence& sentence, const Span& a, const Span& b,
                                          SdpAnchor anchor) {
  if (a.overlaps(b)) throw Error("sentence '" + sentence.id + "': SDP endpoints overlap");
  const int n = sentence.size();
  const int from = span_anchor(a, anchor);
  const int to = span_anchor(b, anchor);
  if (from < 0 || from >= n || to < 0 || to >= n) throw Error("SDP anchor out of range");

  auto ancestors = [&](int node) {
    std::vector<int> chain;
    for (int cur = node; cur != -1; cur = sentence.tokens[cur].head) {
      chain.push_back(cur);
      if (static_cast<int>(chain.size()) > n) throw Error("cyclic dependency heads");
    }
    return chain;
  };
  auto up_a = ancestors(from);
  auto up_b = ancestors(to);
  // Strip the shared suffix above the lowest common ancestor.
  while (up_a.size() >= 2 && up_b.size() >= 2 && up_a[up_a.size() - 2] == up_b[up_b.size() - 2]) {
    up_a.pop_back();
    up_b.pop_back();
  }
  if (up_a.back() != up_b.back()) throw Error("dependency tree is disconnected");
  std::vector<int> path = up_a;
  for (auto it = up_b.rbegin() + 1; it != up_b.rend(); ++it) path.push_back(*it);
  return path;
}

Eigen::MatrixXd sdp_adjacency(const Sentence& sentence, const std::vector<int>& nodes) {
  const int n = sentence.size();
  std::vector<char> on_path(n, 0);
  for (int v : nodes) {
    if (v < 0 || v >= n) throw Error("path node out of range");
    on_path[v] = 1;
  }
  Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
  for (int i = 0; i < n; ++i) {
    int h = sentence.tokens[i].head;
    if (h >= 0 && on_path[i] && on_path[h]) {
      a(i, h) = 1.0;
      a(h, i) = 1.0;
    }
  }
  Eigen::VectorXd inv_sqrt = a.rowwise().sum().cwiseSqrt().cwiseInverse();
  return inv_sqrt.asDiagonal() * a * inv_sqrt.asDiagonal();
}

std::vector<int> sdp_nodes(const Sentence& sentence, const Span& a, const Span& b,
                           const SdpOptions& options) {
  auto path = shortest_dependency_path(sentence, a, b, options.anchor);
  if (options.include_internal) {
    for (const Span* sp : {&a, &b}) {
      for (int i = sp->start; i <= sp->end; ++i) path.push_back(i);
    }
  }
  std::sort(path.begin(), path.end());
  path.erase(std::unique(path.begin(), path.end()), path.end());
  return path;
}

}  // namespace kbc
