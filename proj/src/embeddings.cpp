#include "kbc/embeddings.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "kbc/text_util.hpp"

namespace kbc {

namespace {

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

// Numerically safe -log(sigmoid(x)).
double neg_log_sigmoid(double x) { return x >= 0 ? std::log1p(std::exp(-x)) : -x + std::log1p(std::exp(x)); }

void init_row(EmbeddingTable& table, int row, Rng& rng) {
  const double half = 0.5 / table.dim();
  std::uniform_real_distribution<double> dist(-half, half);
  for (int k = 0; k < table.dim(); ++k) table.vectors()(row, k) = dist(rng);
}

// Unigram^0.75 sampler over a subset of rows.
class NegativeSampler {
 public:
  NegativeSampler() = default;
  NegativeSampler(const EmbeddingTable& table, std::vector<int> rows) : rows_(std::move(rows)) {
    std::vector<double> weights;
    weights.reserve(rows_.size());
    bool any = false;
    for (int r : rows_) {
      double w = std::pow(static_cast<double>(table.count(r)), 0.75);
      any = any || w > 0;
      weights.push_back(w);
    }
    if (!any) std::fill(weights.begin(), weights.end(), 1.0);
    if (!rows_.empty()) dist_ = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
  }
  bool empty() const { return rows_.empty(); }
  int draw(Rng& rng) { return rows_[dist_(rng)]; }

 private:
  std::vector<int> rows_;
  std::discrete_distribution<std::size_t> dist_;
};

struct SgdState {
  double lr0;
  long long total_steps;
  long long step = 0;
  double lr() const {
    double progress = total_steps > 0 ? static_cast<double>(step) / static_cast<double>(total_steps) : 0.0;
    return lr0 * std::max(1e-4, 1.0 - progress);
  }
};

// One positive pair plus `negatives` sampled negatives with tied vectors.
// Returns the pair's loss.
double sgns_update(EmbeddingTable::Matrix& vec, int center, int context, NegativeSampler& sampler,
                   int negatives, double lr, Rng& rng, Eigen::VectorXd& grad_center) {
  grad_center.setZero();
  double loss = 0.0;
  auto step_target = [&](int target, double label) {
    double score = vec.row(center).dot(vec.row(target));
    double p = sigmoid(score);
    loss += label > 0 ? neg_log_sigmoid(score) : neg_log_sigmoid(-score);
    double g = (p - label);
    grad_center += g * vec.row(target).transpose();
    vec.row(target) -= lr * g * vec.row(center);
  };
  step_target(context, 1.0);
  for (int k = 0; k < negatives; ++k) {
    // Redraw collisions so every pair sees exactly `negatives` terms; give up
    // after a few tries on degenerate vocabularies.
    int neg = sampler.draw(rng);
    for (int attempt = 0; attempt < 8 && (neg == context || neg == center); ++attempt) neg = sampler.draw(rng);
    if (neg == context || neg == center) continue;
    step_target(neg, 0.0);
  }
  vec.row(center) -= lr * grad_center.transpose();
  return loss;
}

std::vector<std::pair<int, int>> kb_pairs(const KnowledgeBase& kb, const EmbeddingTable& table) {
  std::vector<std::pair<int, int>> pairs;
  for (const auto& e : kb.entities()) {
    int v = table.row(entity_symbol(e.id));
    for (const auto& u : kb.neighbors(e.id)) pairs.emplace_back(v, table.row(entity_symbol(u)));
  }
  return pairs;
}

}  // namespace

void SkipGramConfig::validate() const {
  if (dim <= 0) throw Error("embedding dim must be positive");
  if (negatives < 1) throw Error("negatives must be >= 1");
  if (window < 1) throw Error("window must be >= 1");
  if (epochs < 0) throw Error("epochs must be non-negative");
  if (!(learning_rate > 0)) throw Error("learning rate must be positive");
}

int EmbeddingTable::add_symbol(const std::string& symbol, std::int64_t count) {
  auto it = index_.find(symbol);
  if (it != index_.end()) {
    counts_[it->second] += count;
    return it->second;
  }
  int r = size();
  symbols_.push_back(symbol);
  index_.emplace(symbol, r);
  counts_.push_back(count);
  vectors_.conservativeResize(r + 1, dim_);
  vectors_.row(r).setZero();
  return r;
}

int EmbeddingTable::row(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) throw Error("symbol '" + symbol + "' not in embedding table");
  return it->second;
}

int EmbeddingTable::find(const std::string& symbol) const {
  auto it = index_.find(symbol);
  return it == index_.end() ? -1 : it->second;
}

bool EmbeddingTable::phrase_vector(const std::string& phrase, Eigen::VectorXd& out) const {
  out = Eigen::VectorXd::Zero(dim_);
  int hits = 0;
  for (const auto& w : split_ws(phrase)) {
    if (is_entity_symbol(w)) continue;
    int r = find(w);
    if (r < 0) continue;
    out += vectors_.row(r).transpose();
    ++hits;
  }
  if (hits == 0) return false;
  out /= hits;
  return true;
}

std::vector<int> EmbeddingTable::entity_rows() const {
  std::vector<int> rows;
  for (int r = 0; r < size(); ++r) {
    if (is_entity_symbol(symbols_[r])) rows.push_back(r);
  }
  return rows;
}

void EmbeddingTable::save(std::ostream& out) const {
  out << size() << ' ' << dim_ << '\n';
  char buf[64];
  for (int r = 0; r < size(); ++r) {
    out << symbols_[r];
    for (int k = 0; k < dim_; ++k) {
      std::snprintf(buf, sizeof buf, " %.17g", vectors_(r, k));
      out << buf;
    }
    out << '\n';
  }
}

void EmbeddingTable::save(const std::filesystem::path& file) const {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  save(out);
}

EmbeddingTable EmbeddingTable::load(std::istream& in) {
  int n = 0, dim = 0;
  std::string header;
  if (!std::getline(in, header)) throw Error("embedding file: missing header");
  auto parts = split_ws(header);
  if (parts.size() != 2) throw Error("embedding file: header must be '<count> <dim>'");
  n = std::stoi(parts[0]);
  dim = std::stoi(parts[1]);
  if (n < 0 || dim <= 0) throw Error("embedding file: bad header");
  EmbeddingTable table(dim);
  std::string line;
  for (int i = 0; i < n; ++i) {
    if (!std::getline(in, line)) throw Error("embedding file: truncated at row " + std::to_string(i));
    strip_cr(line);
    auto fields = split(line, ' ');
    if (static_cast<int>(fields.size()) != dim + 1) {
      throw Error("embedding file: row " + std::to_string(i) + " has wrong width");
    }
    int r = table.add_symbol(fields[0]);
    for (int k = 0; k < dim; ++k) table.vectors_(r, k) = std::stod(fields[k + 1]);
  }
  if (!table.all_finite()) throw Error("embedding file: non-finite value");
  return table;
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open " + file.string());
  return load(in);
}

EmbeddingTable train_node_embeddings(const KnowledgeBase& kb, const SkipGramConfig& cfg,
                                     TrainingTrace* trace) {
  cfg.validate();
  Rng rng(derive_seed(cfg.seed, "node-embeddings"));
  EmbeddingTable table(cfg.dim);
  for (const auto& e : kb.entities()) {
    int r = table.add_symbol(entity_symbol(e.id), static_cast<std::int64_t>(kb.neighbors(e.id).size()));
    init_row(table, r, rng);
  }
  if (trace) {
    for (const auto& e : kb.entities()) {
      if (kb.neighbors(e.id).empty()) trace->isolated_entities.push_back(e.id);
    }
  }
  auto pairs = kb_pairs(kb, table);
  if (pairs.empty() || cfg.epochs == 0) return table;

  NegativeSampler sampler(table, table.entity_rows());
  SgdState sgd{cfg.learning_rate, static_cast<long long>(pairs.size()) * cfg.epochs};
  Eigen::VectorXd grad(cfg.dim);
  auto& vec = table.vectors();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(pairs.begin(), pairs.end(), rng);
    double total = 0.0;
    for (const auto& [v, u] : pairs) {
      total += sgns_update(vec, v, u, sampler, cfg.negatives, sgd.lr(), rng, grad);
      ++sgd.step;
    }
    if (trace) trace->epoch_loss.push_back(total / static_cast<double>(pairs.size()));
  }
  return table;
}

std::vector<std::string> joint_token_stream(const Sentence& sentence) {
  std::vector<std::string> stream;
  std::vector<const Span*> by_end(sentence.size(), nullptr);
  for (const auto& sp : sentence.spans) {
    if (sp.entity) by_end[sp.end] = &sp;
  }
  for (int i = 0; i < sentence.size(); ++i) {
    stream.push_back(sentence.tokens[i].surface);
    if (by_end[i]) stream.push_back(entity_symbol(*by_end[i]->entity));
  }
  return stream;
}

EmbeddingTable train_joint_embeddings(const std::vector<Sentence>& linked_sentences,
                                      const KnowledgeBase& kb, const EmbeddingTable& init,
                                      const SkipGramConfig& cfg, TrainingTrace* trace) {
  cfg.validate();
  if (linked_sentences.empty()) throw Error("joint embedding training needs a non-empty corpus");
  if (init.dim() != cfg.dim) throw Error("initial table dim does not match config");
  Rng rng(derive_seed(cfg.seed, "joint-embeddings"));
  EmbeddingTable table = init;
  for (const auto& e : kb.entities()) {
    if (!table.contains(entity_symbol(e.id))) init_row(table, table.add_symbol(entity_symbol(e.id)), rng);
  }

  std::vector<std::vector<int>> streams;
  streams.reserve(linked_sentences.size());
  for (const auto& s : linked_sentences) {
    std::vector<int> ids;
    for (const auto& sym : joint_token_stream(s)) {
      if (is_entity_symbol(sym) && !table.contains(sym)) continue;
      bool fresh = !table.contains(sym);
      int r = table.add_symbol(sym, 1);
      if (fresh) init_row(table, r, rng);
      ids.push_back(r);
    }
    streams.push_back(std::move(ids));
  }

  std::vector<int> word_rows;
  for (int r = 0; r < table.size(); ++r) {
    if (!is_entity_symbol(table.symbol(r))) word_rows.push_back(r);
  }
  NegativeSampler word_sampler(table, word_rows);
  NegativeSampler entity_sampler(table, table.entity_rows());
  auto pairs = kb_pairs(kb, table);

  long long text_pairs = 0;
  for (const auto& s : streams) {
    const long long n = static_cast<long long>(s.size());
    for (long long t = 0; t < n; ++t) {
      text_pairs += std::min<long long>(cfg.window, t) + std::min<long long>(cfg.window, n - 1 - t);
    }
  }
  const long long per_epoch = text_pairs + (cfg.interleave_kb_objective ? static_cast<long long>(pairs.size()) : 0);
  SgdState sgd{cfg.learning_rate, per_epoch * cfg.epochs};
  Eigen::VectorXd grad(cfg.dim);
  auto& vec = table.vectors();

  std::vector<std::size_t> order(streams.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    double total = 0.0;
    long long count = 0;
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t idx : order) {
      const auto& s = streams[idx];
      const int n = static_cast<int>(s.size());
      for (int t = 0; t < n; ++t) {
        for (int j = std::max(0, t - cfg.window); j <= std::min(n - 1, t + cfg.window); ++j) {
          if (j == t) continue;
          auto& sampler = is_entity_symbol(table.symbol(s[j])) ? entity_sampler : word_sampler;
          total += sgns_update(vec, s[t], s[j], sampler, cfg.negatives, sgd.lr(), rng, grad);
          ++sgd.step;
          ++count;
        }
      }
    }
    if (cfg.interleave_kb_objective && !pairs.empty()) {
      std::shuffle(pairs.begin(), pairs.end(), rng);
      for (const auto& [v, u] : pairs) {
        total += sgns_update(vec, v, u, entity_sampler, cfg.negatives, sgd.lr(), rng, grad);
        ++sgd.step;
        ++count;
      }
    }
    if (trace) trace->epoch_loss.push_back(count ? total / static_cast<double>(count) : 0.0);
  }
  return table;
}

std::vector<Neighbor> knn_candidates(const EmbeddingTable& table, const std::string& phrase, int k) {
  if (k < 1) throw Error("knn_candidates: k must be >= 1");
  Eigen::VectorXd query;
  if (!table.phrase_vector(phrase, query)) return {};
  std::vector<Neighbor> all;
  for (int r : table.entity_rows()) {
    double d = (table.vectors().row(r).transpose() - query).norm();
    all.push_back({table.symbol(r).substr(std::char_traits<char>::length(kEntityPrefix)), d});
  }
  auto less = [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.entity < b.entity;
  };
  const std::size_t keep = std::min<std::size_t>(static_cast<std::size_t>(k), all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<long>(keep), all.end(), less);
  all.resize(keep);
  return all;
}

}  // namespace kbc
