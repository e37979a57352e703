#include "kbc/entity_linker.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <numeric>
#include <set>

#include "kbc/nn/layers.hpp"
#include "kbc/nn/optimizer.hpp"
#include "kbc/text_util.hpp"

namespace kbc {

namespace {

std::string normalize_surface(const std::string& s, bool lowercase) {
  auto joined = join(split_ws(s), " ");
  return lowercase ? to_lower(joined) : joined;
}

std::uint32_t fnv1a(const std::string& s) {
  std::uint32_t h = 2166136261u;
  for (unsigned char c : s) {
    h ^= c;
    h *= 16777619u;
  }
  return h;
}

// Coarse word shape: runs of upper, lower, digit and other characters.
std::string word_shape(const std::string& w) {
  std::string shape;
  for (unsigned char c : w) {
    char k = std::isupper(c) ? 'X' : std::islower(c) ? 'x' : std::isdigit(c) ? 'd' : c >= 0x80 ? 'u' : '.';
    if (shape.empty() || shape.back() != k) shape.push_back(k);
  }
  return shape;
}

double logistic(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

// ---- recognition ------------------------------------------------------------

SurfaceTyper::SurfaceTyper(const KnowledgeBase& kb, const Gazetteer& gazetteer)
    : lowercase_(gazetteer.lowercase()) {
  std::unordered_map<std::string, std::set<std::string>> seen;
  for (const auto& e : kb.entities()) {
    for (const auto& a : e.aliases) {
      auto key = normalize_surface(a, lowercase_);
      if (!key.empty()) seen[key].insert(e.type);
    }
  }
  for (auto& [key, types] : seen) types_[key] = types.size() == 1 ? *types.begin() : std::string(kUntyped);
}

std::string SurfaceTyper::type_of(const std::string& surface) const {
  auto it = types_.find(normalize_surface(surface, lowercase_));
  return it == types_.end() ? std::string(kUntyped) : it->second;
}

GazetteerRecognizer::GazetteerRecognizer(const KnowledgeBase& kb, bool lowercase)
    : gazetteer_(kb, lowercase), typer_(kb, gazetteer_) {}

std::vector<Span> GazetteerRecognizer::recognize(const Sentence& sentence) const {
  auto spans = longest_ngram_match(sentence, gazetteer_);
  for (auto& s : spans) s.type = typer_.type_of(s.surface);
  return spans;
}

TrainableSpanClassifier::TrainableSpanClassifier(const KnowledgeBase& kb, SpanClassifierConfig cfg)
    : cfg_(cfg), gazetteer_(kb), typer_(kb, gazetteer_) {
  if (cfg_.hash_bits < 4 || cfg_.hash_bits > 26) throw Error("span classifier hash_bits must be in [4, 26]");
  if (cfg_.epochs < 1) throw Error("span classifier epochs must be >= 1");
  weights_.assign(std::size_t{1} << cfg_.hash_bits, 0.0);
}

std::vector<std::uint32_t> TrainableSpanClassifier::features(const Sentence& sentence, int start,
                                                             int end) const {
  std::vector<std::string> f;
  auto surface = sentence.surface(start, end);
  bool in_gaz = gazetteer_.contains(surface);
  int len = end - start + 1;
  auto word = [&](int i) -> std::string {
    if (i < 0) return "<s>";
    if (i >= sentence.size()) return "</s>";
    return sentence.tokens[i].surface;
  };
  f.push_back("bias");
  f.push_back("s=" + surface);
  f.push_back(std::string("g=") + (in_gaz ? "1" : "0"));
  f.push_back("len=" + std::to_string(std::min(len, 6)));
  f.push_back("g&len=" + std::to_string(in_gaz) + std::to_string(std::min(len, 6)));
  std::string shape;
  for (int i = start; i <= end; ++i) {
    f.push_back("w=" + word(i));
    shape += word_shape(word(i)) + "_";
  }
  f.push_back("shape=" + shape);
  f.push_back("first=" + word(start));
  f.push_back("last=" + word(end));
  f.push_back("L1=" + word(start - 1));
  f.push_back("L2=" + word(start - 2));
  f.push_back("R1=" + word(end + 1));
  f.push_back("R2=" + word(end + 2));
  f.push_back("L1s=" + word_shape(word(start - 1)));
  f.push_back("R1s=" + word_shape(word(end + 1)));

  const std::uint32_t mask = (std::uint32_t{1} << cfg_.hash_bits) - 1;
  std::vector<std::uint32_t> out;
  out.reserve(f.size());
  for (const auto& s : f) out.push_back(fnv1a(s) & mask);
  return out;
}

double TrainableSpanClassifier::logit(const std::vector<std::uint32_t>& feats) const {
  double z = 0.0;
  for (auto h : feats) z += weights_[h];
  return z;
}

void TrainableSpanClassifier::train(const std::vector<Sentence>& labeled) {
  int longest = 0;
  for (const auto& s : labeled) {
    for (const auto& sp : s.spans) longest = std::max(longest, sp.length());
  }
  if (longest == 0) throw Error("span classifier: training data has no labeled spans");
  max_ngram_ = cfg_.max_ngram > 0 ? cfg_.max_ngram : longest;

  struct Example {
    std::vector<std::uint32_t> feats;
    double label;
  };
  std::vector<Example> examples;
  for (const auto& s : labeled) {
    for (int a = 0; a < s.size(); ++a) {
      for (int b = a; b < s.size() && b - a < max_ngram_; ++b) {
        bool positive = std::any_of(s.spans.begin(), s.spans.end(),
                                    [&](const Span& sp) { return sp.start == a && sp.end == b; });
        examples.push_back({features(s, a, b), positive ? 1.0 : 0.0});
      }
    }
  }

  std::fill(weights_.begin(), weights_.end(), 0.0);
  Rng rng(derive_seed(cfg_.seed, "span-classifier"));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double lr = cfg_.learning_rate / (1.0 + epoch);
    for (auto idx : order) {
      const auto& ex = examples[idx];
      double g = logistic(logit(ex.feats)) - ex.label;
      for (auto h : ex.feats) weights_[h] -= lr * (g + cfg_.l2 * weights_[h]);
    }
  }
  for (double w : weights_) {
    if (!std::isfinite(w)) throw Error("span classifier: training diverged");
  }
  trained_ = true;
}

double TrainableSpanClassifier::probability(const Sentence& sentence, int start, int end) const {
  if (!trained_) throw Error("span classifier is not trained");
  return logistic(logit(features(sentence, start, end)));
}

std::vector<Span> TrainableSpanClassifier::recognize(const Sentence& sentence) const {
  if (!trained_) throw Error("span classifier is not trained");
  struct Scored {
    int start, end;
    double p;
  };
  std::vector<Scored> hits;
  for (int a = 0; a < sentence.size(); ++a) {
    for (int b = a; b < sentence.size() && b - a < max_ngram_; ++b) {
      double p = probability(sentence, a, b);
      if (p > 0.5) hits.push_back({a, b, p});
    }
  }
  std::sort(hits.begin(), hits.end(), [](const Scored& x, const Scored& y) {
    if (x.p != y.p) return x.p > y.p;
    if (x.start != y.start) return x.start < y.start;
    return x.end > y.end;
  });
  std::vector<Span> kept;
  for (const auto& h : hits) {
    Span sp;
    sp.start = h.start;
    sp.end = h.end;
    if (std::any_of(kept.begin(), kept.end(), [&](const Span& k) { return k.overlaps(sp); })) continue;
    sp.surface = sentence.surface(h.start, h.end);
    sp.type = typer_.type_of(sp.surface);
    kept.push_back(std::move(sp));
  }
  std::sort(kept.begin(), kept.end(), [](const Span& x, const Span& y) { return x.start < y.start; });
  return kept;
}

nn::Checkpoint TrainableSpanClassifier::to_checkpoint() const {
  if (!trained_) throw Error("span classifier is not trained");
  nn::Checkpoint ckpt;
  ckpt.meta["kind"] = "span-classifier";
  ckpt.meta["hash_bits"] = std::to_string(cfg_.hash_bits);
  ckpt.meta["max_ngram"] = std::to_string(max_ngram_);
  nn::Matrix w(1, static_cast<Eigen::Index>(weights_.size()));
  for (std::size_t i = 0; i < weights_.size(); ++i) w(0, static_cast<Eigen::Index>(i)) = weights_[i];
  ckpt.tensors.emplace_back("weights", std::move(w));
  return ckpt;
}

void TrainableSpanClassifier::load_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.require_meta("kind") != "span-classifier") throw Error("checkpoint is not a span classifier");
  int bits = std::stoi(ckpt.require_meta("hash_bits"));
  if (bits != cfg_.hash_bits) throw Error("span classifier checkpoint has different hash_bits");
  max_ngram_ = std::stoi(ckpt.require_meta("max_ngram"));
  for (const auto& [name, m] : ckpt.tensors) {
    if (name != "weights") continue;
    if (m.size() != static_cast<Eigen::Index>(weights_.size())) throw nn::ShapeError("span classifier weights");
    for (Eigen::Index i = 0; i < m.size(); ++i) weights_[static_cast<std::size_t>(i)] = m(0, i);
    trained_ = true;
    return;
  }
  throw Error("span classifier checkpoint has no weights");
}

// ---- candidates -------------------------------------------------------------

const char* to_string(CandidateSource s) {
  switch (s) {
    case CandidateSource::kDictionary: return "dictionary";
    case CandidateSource::kKnn: return "knn";
    case CandidateSource::kBoth: return "both";
  }
  return "?";
}

Candidate generate_candidates(const Span& span, const KnowledgeBase& kb, const EmbeddingTable& table, int k) {
  Candidate c;
  c.span = span;
  const auto& dict = kb.lookup_alias(span.surface);
  c.entities = dict;
  bool knn_added = false;
  if (k > 0 && table.size() > 0) {
    for (const auto& n : knn_candidates(table, span.surface, k)) {
      if (std::find(c.entities.begin(), c.entities.end(), n.entity) != c.entities.end()) continue;
      if (!kb.has_entity(n.entity)) continue;
      c.entities.push_back(n.entity);
      knn_added = true;
    }
  }
  c.source = dict.empty() ? CandidateSource::kKnn : knn_added ? CandidateSource::kBoth : CandidateSource::kDictionary;
  return c;
}

// ---- step one ---------------------------------------------------------------

std::vector<std::vector<double>> subgraph_counts(const std::vector<Candidate>& candidates,
                                                 const KnowledgeBase& kb, const SubgraphOptions& options) {
  std::vector<std::vector<double>> counts(candidates.size());
  for (std::size_t a = 0; a < candidates.size(); ++a) counts[a].assign(candidates[a].entities.size(), 0.0);
  for (std::size_t a = 0; a < candidates.size(); ++a) {
    for (std::size_t b = a + 1; b < candidates.size(); ++b) {
      const auto& ea = candidates[a].entities;
      const auto& eb = candidates[b].entities;
      for (std::size_t i = 0; i < ea.size(); ++i) {
        for (std::size_t j = 0; j < eb.size(); ++j) {
          if (!kb.connected(ea[i], eb[j])) continue;
          double w = options.count_multiplicity ? static_cast<double>(kb.connection_multiplicity(ea[i], eb[j])) : 1.0;
          counts[a][i] += w;
          counts[b][j] += w;
        }
      }
    }
  }
  return counts;
}

namespace {

std::vector<std::pair<EntityId, double>> rank(const std::vector<EntityId>& entities, const std::vector<double>& scores) {
  std::vector<std::pair<EntityId, double>> out;
  for (std::size_t i = 0; i < entities.size(); ++i) out.emplace_back(entities[i], scores[i]);
  std::sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
    if (x.second != y.second) return x.second > y.second;
    return x.first < y.first;
  });
  return out;
}

}  // namespace

std::vector<std::optional<LinkDecision>> subgraph_link(const std::vector<Candidate>& candidates,
                                                       const KnowledgeBase& kb, const SubgraphOptions& options) {
  auto counts = subgraph_counts(candidates, kb, options);
  std::vector<std::optional<LinkDecision>> out(candidates.size());
  for (std::size_t a = 0; a < candidates.size(); ++a) {
    const auto& c = counts[a];
    if (c.empty()) continue;
    double best = *std::max_element(c.begin(), c.end());
    if (best <= 0 || std::count(c.begin(), c.end(), best) != 1) continue;
    auto at = std::find(c.begin(), c.end(), best) - c.begin();
    LinkDecision d;
    d.span = candidates[a].span;
    d.entity = candidates[a].entities[static_cast<std::size_t>(at)];
    d.method = LinkMethod::kSubgraph;
    d.score = best;
    d.ranking = rank(candidates[a].entities, c);
    out[a] = std::move(d);
  }
  return out;
}

// ---- step two ---------------------------------------------------------------

ContextLinkerModel::ContextLinkerModel(int embedding_dim, const ContextLinkerConfig& cfg)
    : dim_(embedding_dim), cfg_(cfg) {
  if (dim_ <= 0 || cfg_.hidden <= 0 || cfg_.mlp_hidden <= 0) throw Error("context linker dimensions must be positive");
  Rng rng(derive_seed(cfg_.seed, "context-linker-init"));
  build(&rng);
}

void ContextLinkerModel::build(Rng* rng) {
  const int h = cfg_.hidden;
  auto add = [&](const std::string& name, int r, int c) {
    if (rng) return std::ref(params_.add_uniform(name, r, c, *rng));
    return std::ref(params_.add(name, r, c));
  };
  for (const char* dir : {"fwd", "bwd"}) {
    std::string p = std::string("el.") + dir;
    add(p + "_wx", 4 * h, dim_);
    add(p + "_wh", 4 * h, h);
    auto& b = params_.add(p + "_b", 4 * h, 1);
    b.value.block(h, 0, h, 1).setOnes();  // forget-gate bias
  }
  add("el.w1", cfg_.mlp_hidden, scorer_input_dim());
  params_.add("el.b1", cfg_.mlp_hidden, 1);
  add("el.w2", 1, cfg_.mlp_hidden);
  params_.add("el.b2", 1, 1);
}

nn::Matrix ContextLinkerModel::token_inputs(const Sentence& sentence, const EmbeddingTable& table) const {
  if (table.dim() != dim_) throw nn::ShapeError("embedding table dim differs from context linker");
  nn::Matrix x = nn::Matrix::Zero(dim_, sentence.size());
  for (int i = 0; i < sentence.size(); ++i) {
    int r = table.find(sentence.tokens[i].surface);
    if (r >= 0) x.col(i) = table.vectors().row(r).transpose();
  }
  return x;
}

namespace {

struct ContextPass {
  nn::BiLstmCache cache;
  nn::Vector v_c;
};

nn::BiLstmWeights bilstm_weights(const nn::ParameterStore& p) {
  auto v = [&](const char* n) -> const nn::Matrix& { return p.find(n)->value; };
  return {v("el.fwd_wx"), v("el.fwd_wh"), v("el.fwd_b"), v("el.bwd_wx"), v("el.bwd_wh"), v("el.bwd_b")};
}

void encode(const ContextLinkerModel& m, const nn::Matrix& x, ContextPass& pass) {
  const int h = m.config().hidden;
  pass.v_c = nn::Vector::Zero(2 * h);
  if (x.cols() == 0) return;
  nn::Matrix out = nn::bilstm_forward(x, bilstm_weights(m.params()), &pass.cache);
  pass.v_c.head(h) = out.block(0, x.cols() - 1, h, 1);
  pass.v_c.tail(h) = out.block(h, 0, h, 1);
}

struct ScorePass {
  nn::Matrix u, z1, a1, s;
};

double mlp_forward(const nn::ParameterStore& p, const nn::Vector& input, ScorePass* pass) {
  nn::Matrix u = input;
  nn::Matrix z1 = nn::affine(u, p.find("el.w1")->value, p.find("el.b1")->value);
  nn::Matrix a1 = nn::relu(z1);
  nn::Matrix s = nn::sigmoid(nn::affine(a1, p.find("el.w2")->value, p.find("el.b2")->value));
  if (pass) *pass = {u, z1, a1, s};
  return s(0, 0);
}

// Accumulates parameter gradients for d(score) = ds; returns d(input).
nn::Vector mlp_backward(nn::ParameterStore& p, const ScorePass& pass, double ds) {
  nn::Matrix dy = nn::sigmoid_backward(pass.s, nn::Matrix::Constant(1, 1, ds));
  auto g2 = nn::affine_backward(pass.a1, p.get("el.w2").value, dy);
  p.get("el.w2").grad += g2.dw;
  p.get("el.b2").grad += g2.db;
  auto g1 = nn::affine_backward(pass.u, p.get("el.w1").value, nn::relu_backward(pass.z1, g2.dx));
  p.get("el.w1").grad += g1.dw;
  p.get("el.b1").grad += g1.db;
  return g1.dx.col(0);
}

void encode_backward(ContextLinkerModel& m, const ContextPass& pass, const nn::Vector& dv_c, int n) {
  if (n == 0) return;
  const int h = m.config().hidden;
  nn::Matrix dh = nn::Matrix::Zero(2 * h, n);
  dh.block(0, n - 1, h, 1) += dv_c.head(h);
  dh.block(h, 0, h, 1) += dv_c.tail(h);
  auto g = nn::bilstm_backward(bilstm_weights(m.params()), pass.cache, dh);
  auto& p = m.params();
  p.get("el.fwd_wx").grad += g.fwd.dwx;
  p.get("el.fwd_wh").grad += g.fwd.dwh;
  p.get("el.fwd_b").grad += g.fwd.db;
  p.get("el.bwd_wx").grad += g.bwd.dwx;
  p.get("el.bwd_wh").grad += g.bwd.dwh;
  p.get("el.bwd_b").grad += g.bwd.db;
}

}  // namespace

nn::Vector ContextLinkerModel::encode_context(const Sentence& sentence, const EmbeddingTable& table) const {
  ContextPass pass;
  encode(*this, token_inputs(sentence, table), pass);
  return pass.v_c;
}

nn::Vector ContextLinkerModel::scorer_input(const nn::Vector& context, const Span& span, const EntityId& entity,
                                            const EmbeddingTable& table) const {
  nn::require_shape(context.size() == context_dim(), "context vector");
  nn::Vector in(scorer_input_dim());
  in.head(context_dim()) = context;
  nn::Vector w_e;
  if (!table.phrase_vector(span.surface, w_e)) w_e = nn::Vector::Zero(dim_);
  in.segment(context_dim(), dim_) = w_e;
  int r = table.find(entity_symbol(entity));
  in.tail(dim_) = r >= 0 ? nn::Vector(table.vectors().row(r).transpose()) : nn::Vector::Zero(dim_);
  return in;
}

double ContextLinkerModel::score_input(const nn::Vector& input) const {
  if (!trained_) throw Error("context linker is not trained");
  return mlp_forward(params_, input, nullptr);
}

nn::Checkpoint ContextLinkerModel::to_checkpoint() const {
  nn::Checkpoint ckpt;
  ckpt.meta["kind"] = "context-linker";
  ckpt.meta["dim"] = std::to_string(dim_);
  ckpt.meta["hidden"] = std::to_string(cfg_.hidden);
  ckpt.meta["mlp_hidden"] = std::to_string(cfg_.mlp_hidden);
  ckpt.meta["margin"] = std::to_string(cfg_.margin);
  ckpt.add_parameters(params_);
  return ckpt;
}

ContextLinkerModel ContextLinkerModel::from_checkpoint(const nn::Checkpoint& ckpt) {
  if (ckpt.require_meta("kind") != "context-linker") throw Error("checkpoint is not a context linker");
  ContextLinkerModel m;
  m.dim_ = std::stoi(ckpt.require_meta("dim"));
  m.cfg_.hidden = std::stoi(ckpt.require_meta("hidden"));
  m.cfg_.mlp_hidden = std::stoi(ckpt.require_meta("mlp_hidden"));
  m.cfg_.margin = std::stod(ckpt.require_meta("margin"));
  m.build(nullptr);
  ckpt.restore_parameters(m.params_);
  m.trained_ = true;
  return m;
}

double context_score(const ContextLinkerModel& model, const EmbeddingTable& table, const Sentence& sentence,
                     const Span& span, const EntityId& entity) {
  if (!model.trained()) throw Error("context linker is not trained");
  return model.score_input(model.scorer_input(model.encode_context(sentence, table), span, entity, table));
}

ContextLinkerModel train_context_linker(const std::vector<Sentence>& linked, const KnowledgeBase& kb,
                                        const EmbeddingTable& table, const ContextLinkerConfig& cfg,
                                        ContextTrainingTrace* trace) {
  struct Item {
    std::size_t sentence;
    Span span;
    EntityId gold;
    std::vector<EntityId> negatives;
  };
  std::vector<Item> items;
  for (std::size_t si = 0; si < linked.size(); ++si) {
    for (const auto& sp : linked[si].spans) {
      if (!sp.entity || !kb.has_entity(*sp.entity)) continue;
      Item it{si, sp, *sp.entity, {}};
      for (auto& e : generate_candidates(sp, kb, table, cfg.k).entities) {
        if (e != it.gold) it.negatives.push_back(std::move(e));
      }
      items.push_back(std::move(it));
    }
  }
  if (items.empty()) throw Error("context linker: no linked spans to train on");
  if (kb.entity_count() < 2) throw Error("context linker: KB needs at least two entities");

  ContextLinkerModel model(table.dim(), cfg);
  nn::Adam adam({cfg.learning_rate});
  Rng rng(derive_seed(cfg.seed, "context-linker-train"));
  const auto& all_entities = kb.entities();
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  if (trace) trace->items = static_cast<int>(items.size());

  // Inputs depend only on frozen vectors, so they are computed once.
  std::vector<nn::Matrix> inputs(linked.size());
  for (std::size_t si = 0; si < linked.size(); ++si) inputs[si] = model.token_inputs(linked[si], table);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (auto idx : order) {
      const auto& it = items[idx];
      EntityId negative;
      if (!it.negatives.empty()) {
        negative = it.negatives[std::uniform_int_distribution<std::size_t>(0, it.negatives.size() - 1)(rng)];
      } else {
        std::uniform_int_distribution<std::size_t> pick(0, all_entities.size() - 1);
        do negative = all_entities[pick(rng)].id;
        while (negative == it.gold);
      }
      ContextPass pass;
      encode(model, inputs[it.sentence], pass);
      ScorePass pos, neg;
      double s = mlp_forward(model.params(), model.scorer_input(pass.v_c, it.span, it.gold, table), &pos);
      double s_neg = mlp_forward(model.params(), model.scorer_input(pass.v_c, it.span, negative, table), &neg);
      double loss = hinge_loss(s, s_neg, cfg.margin);
      total += loss;
      if (loss <= 0) continue;
      nn::Vector d_in = mlp_backward(model.params(), pos, -1.0) + mlp_backward(model.params(), neg, 1.0);
      encode_backward(model, pass, d_in.head(model.context_dim()), static_cast<int>(inputs[it.sentence].cols()));
      adam.step(model.params());
    }
    double mean = total / static_cast<double>(items.size());
    if (!std::isfinite(mean)) throw Error("context linker: non-finite loss");
    if (trace) trace->epoch_loss.push_back(mean);
  }
  model.mark_trained();
  return model;
}

// ---- full linker ------------------------------------------------------------

std::vector<LinkDecision> link_spans(const Sentence& sentence, const std::vector<Span>& spans,
                                     const KnowledgeBase& kb, const EmbeddingTable& table,
                                     const ContextLinkerModel& model, const LinkOptions& options) {
  std::vector<Candidate> candidates;
  for (auto sp : spans) {
    sp.entity.reset();
    sp.method.reset();
    auto c = generate_candidates(sp, kb, table, options.k);
    if (!c.empty()) candidates.push_back(std::move(c));
  }
  auto first = subgraph_link(candidates, kb, options.subgraph);
  std::vector<LinkDecision> out;
  std::optional<nn::Vector> context;
  for (std::size_t a = 0; a < candidates.size(); ++a) {
    if (first[a]) {
      out.push_back(std::move(*first[a]));
      continue;
    }
    if (!model.trained()) throw Error("context linker is not trained");
    if (!context) context = model.encode_context(sentence, table);
    std::vector<double> scores;
    for (const auto& e : candidates[a].entities) {
      scores.push_back(model.score_input(model.scorer_input(*context, candidates[a].span, e, table)));
    }
    LinkDecision d;
    d.span = candidates[a].span;
    d.method = LinkMethod::kContext;
    d.ranking = rank(candidates[a].entities, scores);
    d.entity = d.ranking.front().first;
    d.score = d.ranking.front().second;
    out.push_back(std::move(d));
  }
  return out;
}

std::vector<LinkDecision> link(const Sentence& sentence, const KnowledgeBase& kb, const EmbeddingTable& table,
                               const ContextLinkerModel& model, const Recognizer& recognizer,
                               const LinkOptions& options) {
  return link_spans(sentence, recognizer.recognize(sentence), kb, table, model, options);
}

Sentence apply_links(const Sentence& sentence, const std::vector<LinkDecision>& decisions) {
  Sentence out = sentence;
  out.spans.clear();
  for (const auto& d : decisions) {
    Span sp = d.span;
    sp.entity = d.entity;
    sp.method = d.method;
    out.spans.push_back(std::move(sp));
  }
  std::sort(out.spans.begin(), out.spans.end(), [](const Span& x, const Span& y) { return x.start < y.start; });
  return out;
}

}  // namespace kbc
