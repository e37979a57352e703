#include "kbc/relation_extractor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "kbc/nn/optimizer.hpp"
#include "kbc/text_util.hpp"

namespace kbc {

using nn::Matrix;
using nn::Vector;

void REConfig::validate() const {
  if (word_dim <= 0 || position_dim <= 0 || type_dim <= 0 || tag_dim <= 0) throw Error("embedding dims must be positive");
  if (hidden <= 0 || hidden % 2 != 0) throw Error("hidden dim must be positive and even");
  if (conv_width <= 0 || conv_width % 2 == 0) throw Error("conv width must be a positive odd number");
  if (gcn_layers < 0) throw Error("gcn layers must be non-negative");
  if (!(margin > 0 && margin < 1)) throw Error("margin must lie in (0, 1)");
  if (!(na_weight > 0)) throw Error("na_weight must be positive");
  if (max_position < 1) throw Error("max_position must be >= 1");
  if (!(learning_rate > 0)) throw Error("learning rate must be positive");
  if (epochs < 0 || batch_size < 1 || max_bag_size < 1) throw Error("bad epochs, batch size or bag size");
}

// ---- vocabularies -----------------------------------------------------------

namespace {

const char* kUnk = "<unk>";
const char* kNoEntity = "<none>";

int lookup(const std::unordered_map<std::string, int>& index, const std::string& key, int fallback) {
  auto it = index.find(key);
  return it == index.end() ? fallback : it->second;
}

}  // namespace

void Vocabularies::index() {
  auto fill = [](const std::vector<std::string>& items, std::unordered_map<std::string, int>& idx) {
    idx.clear();
    for (int i = 0; i < static_cast<int>(items.size()); ++i) idx.emplace(items[i], i);
  };
  fill(words, word_index_);
  fill(types, type_index_);
  fill(tags, tag_index_);
  fill(relations, relation_index_);
}

Vocabularies Vocabularies::build(const std::vector<Sentence>& sentences, const KnowledgeBase& kb,
                                 const EmbeddingTable* table) {
  Vocabularies v;
  v.words.push_back(kUnk);
  if (table) {
    for (const auto& s : table->symbols()) {
      if (!is_entity_symbol(s) && s != kUnk) v.words.push_back(s);
    }
  } else {
    std::set<std::string> seen;
    for (const auto& s : sentences) {
      for (const auto& t : s.tokens) seen.insert(t.surface);
    }
    seen.erase(kUnk);
    v.words.insert(v.words.end(), seen.begin(), seen.end());
  }
  v.types = {kUnk, kNoEntity};
  for (const auto& t : kb.entity_types()) v.types.push_back(t);
  std::set<std::string> tags;
  for (const auto& s : sentences) {
    for (const auto& t : s.tokens) tags.insert(t.pos);
  }
  tags.erase(kUnk);
  v.tags.push_back(kUnk);
  v.tags.insert(v.tags.end(), tags.begin(), tags.end());
  auto rels = kb.relations();
  v.relations.assign(rels.begin(), rels.end());
  std::sort(v.relations.begin(), v.relations.end());
  v.index();
  return v;
}

int Vocabularies::word(const std::string& w) const { return lookup(word_index_, w, 0); }
int Vocabularies::type(const std::string& t) const { return lookup(type_index_, t, 0); }
int Vocabularies::tag(const std::string& t) const { return lookup(tag_index_, t, 0); }
int Vocabularies::relation(const RelationId& r) const { return lookup(relation_index_, r, -1); }

// ---- token encoding ---------------------------------------------------------

int relative_distance(int i, const Span& span) {
  if (i < span.start) return i - span.start;
  if (i > span.end) return i - span.end;
  return 0;
}

TokenEncoding token_encoding(const Sentence& sentence, const Span& subject, const Span& object,
                             const Vocabularies& vocab, int max_position,
                             const std::function<std::string(const Span&)>& span_type) {
  if (subject.overlaps(object)) throw Error("sentence " + sentence.id + ": subject and object spans overlap");
  const int n = sentence.size();
  if (subject.end >= n || object.end >= n || subject.start < 0 || object.start < 0) {
    throw Error("sentence " + sentence.id + ": entity span out of range");
  }
  std::vector<const Span*> others;
  for (const auto& sp : sentence.spans) {
    if (sp.same_range(subject) || sp.same_range(object)) continue;
    if (sp.overlaps(subject) || sp.overlaps(object)) continue;
    others.push_back(&sp);
  }
  std::vector<std::string> token_type(n, kNoEntity);
  for (const Span* sp : others) {
    auto t = span_type(*sp);
    for (int k = sp->start; k <= sp->end; ++k) token_type[k] = t;
  }
  for (const Span* sp : {&subject, &object}) {
    auto t = span_type(*sp);
    for (int k = sp->start; k <= sp->end; ++k) token_type[k] = t;
  }

  TokenEncoding enc;
  enc.n = n;
  auto clip = [&](int d) { return std::clamp(d, -max_position, max_position); };
  for (int k = 0; k < n; ++k) {
    int d1 = clip(relative_distance(k, subject));
    int d2 = clip(relative_distance(k, object));
    int d3 = -1;
    for (const Span* sp : others) {
      int d = std::abs(relative_distance(k, *sp));
      d3 = d3 < 0 ? d : std::min(d3, d);
    }
    if (d3 > max_position) d3 = max_position;
    enc.dist1.push_back(d1);
    enc.dist2.push_back(d2);
    enc.dist3.push_back(d3);
    enc.pos1.push_back(d1 + max_position);
    enc.pos2.push_back(d2 + max_position);
    enc.pos3.push_back(d3 + 1);
    enc.word.push_back(vocab.word(sentence.tokens[k].surface));
    enc.type.push_back(vocab.type(token_type[k]));
    enc.tag.push_back(vocab.tag(sentence.tokens[k].pos));
  }
  return enc;
}

// ---- loss and aggregation ---------------------------------------------------

double sliding_margin_loss(const Vector& scores, const Vector& gold, double threshold, double margin,
                           double na_weight, LossGrads* grads) {
  nn::require_shape(scores.size() == gold.size(), "scores vs gold labels");
  double loss = 0.0;
  if (grads) {
    grads->d_scores = Vector::Zero(scores.size());
    grads->d_threshold = 0.0;
  }
  for (Eigen::Index k = 0; k < scores.size(); ++k) {
    double r = scores(k);
    if (gold(k) > 0.5) {
      double gap = std::max(0.0, threshold + margin - r);
      loss += gap * gap;
      if (grads) {
        grads->d_scores(k) -= 2 * gap;
        grads->d_threshold += 2 * gap;
      }
    } else {
      double gap = std::max(0.0, r - (threshold - margin));
      loss += na_weight * gap * gap;
      if (grads) {
        grads->d_scores(k) += 2 * na_weight * gap;
        grads->d_threshold -= 2 * na_weight * gap;
      }
    }
  }
  return loss;
}

Vector aggregate_bag(const std::vector<Vector>& s, const std::vector<Vector>& g) {
  if (s.empty()) throw Error("cannot aggregate an empty bag");
  nn::require_shape(s.size() == g.size(), "one gate per sentence");
  std::vector<Vector> terms;
  for (std::size_t k = 0; k < s.size(); ++k) {
    nn::require_shape(s[k].size() == s[0].size() && g[k].size() == s[0].size(), "bag vector dims");
    terms.push_back(g[k].cwiseProduct(s[k]));
  }
  // Summing in a content-defined order makes v bit-identical under any
  // permutation of the bag.
  std::sort(terms.begin(), terms.end(), [](const Vector& a, const Vector& b) {
    return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
  });
  Vector v = Vector::Zero(s[0].size());
  for (const auto& t : terms) v += t;
  return v;
}

// ---- model ------------------------------------------------------------------

RelationModel::RelationModel(REConfig cfg, Vocabularies vocab, const EmbeddingTable* table)
    : cfg_(cfg), vocab_(std::move(vocab)) {
  if (table) cfg_.word_dim = table->dim();
  cfg_.validate();
  vocab_.index();
  if (vocab_.relations.empty()) throw Error("relation model needs at least one relation");
  Rng rng(derive_seed(cfg_.seed, "relation-model-init"));
  build(&rng, table);
}

void RelationModel::build(Rng* rng, const EmbeddingTable* table) {
  const int de = cfg_.input_dim(), dh = cfg_.hidden, h = dh / 2, m = cfg_.max_position;
  const int nw = static_cast<int>(vocab_.words.size());
  auto add = [&](const std::string& name, int r, int c) -> nn::Parameter& {
    return rng ? params_.add_uniform(name, r, c, *rng) : params_.add(name, r, c);
  };
  auto& word = add("re.word", cfg_.word_dim, nw);
  if (table) {
    word.value.setZero();
    for (int k = 1; k < nw; ++k) {
      int r = table->find(vocab_.words[k]);
      if (r >= 0) word.value.col(k) = table->vectors().row(r).transpose();
    }
    word.trainable = false;
  }
  add("re.pos1", cfg_.position_dim, 2 * m + 1);
  add("re.pos2", cfg_.position_dim, 2 * m + 1);
  add("re.pos3", cfg_.position_dim, m + 2);
  add("re.type", cfg_.type_dim, static_cast<int>(vocab_.types.size()));
  add("re.tag", cfg_.tag_dim, static_cast<int>(vocab_.tags.size()));
  add("re.conv_w", dh, cfg_.conv_width * de);
  params_.add("re.conv_b", dh, 1);
  for (const char* dir : {"fwd", "bwd"}) {
    std::string p = std::string("re.lstm_") + dir;
    add(p + "_wx", 4 * h, de);
    add(p + "_wh", 4 * h, h);
    auto& b = params_.add(p + "_b", 4 * h, 1);
    b.value.block(h, 0, h, 1).setOnes();
  }
  for (int l = 0; l < cfg_.gcn_layers; ++l) {
    add("re.gcn" + std::to_string(l) + "_w", dh, dh);
    params_.add("re.gcn" + std::to_string(l) + "_b", dh, 1);
  }
  add("re.att_w1", dh, de);
  params_.add("re.att_b1", dh, 1);
  add("re.att_w2", de, dh);
  params_.add("re.att_b2", de, 1);
  add("re.att_proj", dh, de);
  add("re.gate_w1", dh, dh);
  params_.add("re.gate_b1", dh, 1);
  add("re.gate_w2", 6 * dh, dh);
  params_.add("re.gate_b2", 6 * dh, 1);
  add("re.out_w1", 3 * dh, 6 * dh);
  params_.add("re.out_b1", 3 * dh, 1);
  add("re.out_w2", relation_count(), 3 * dh);
  params_.add("re.out_b2", relation_count(), 1);
  params_.add("re.threshold", 1, 1).value(0, 0) = cfg_.threshold_init;
}

double RelationModel::threshold() const { return params_.find("re.threshold")->value(0, 0); }

Instance RelationModel::prepare(const Sentence& sentence, const Span& subject, const Span& object,
                                const KnowledgeBase& kb) const {
  auto span_type = [&](const Span& sp) -> std::string {
    if (sp.entity && kb.has_entity(*sp.entity)) return kb.type_of(*sp.entity);
    return sp.type ? *sp.type : std::string(kUnk);
  };
  Instance inst;
  inst.sentence_id = sentence.id;
  inst.tokens = token_encoding(sentence, subject, object, vocab_, cfg_.max_position, span_type);
  inst.subject = subject;
  inst.object = object;
  inst.i = std::min(subject.start, object.start);
  inst.j = std::max(subject.start, object.start);
  inst.adjacency = sdp_adjacency(sentence, sdp_nodes(sentence, subject, object, cfg_.sdp));
  return inst;
}

Matrix RelationModel::embed(const TokenEncoding& enc) const {
  const int wd = cfg_.word_dim, pd = cfg_.position_dim, td = cfg_.type_dim, gd = cfg_.tag_dim;
  Matrix x(cfg_.input_dim(), enc.n);
  const auto& W = params_.find("re.word")->value;
  const auto& P1 = params_.find("re.pos1")->value;
  const auto& P2 = params_.find("re.pos2")->value;
  const auto& P3 = params_.find("re.pos3")->value;
  const auto& T = params_.find("re.type")->value;
  const auto& G = params_.find("re.tag")->value;
  for (int k = 0; k < enc.n; ++k) {
    int r = 0;
    x.block(r, k, wd, 1) = W.col(enc.word[k]);
    r += wd;
    x.block(r, k, pd, 1) = P1.col(enc.pos1[k]);
    r += pd;
    x.block(r, k, pd, 1) = P2.col(enc.pos2[k]);
    r += pd;
    x.block(r, k, pd, 1) = P3.col(enc.pos3[k]);
    r += pd;
    x.block(r, k, td, 1) = T.col(enc.type[k]);
    r += td;
    x.block(r, k, gd, 1) = G.col(enc.tag[k]);
  }
  return x;
}

void RelationModel::embed_backward(const TokenEncoding& enc, const Matrix& dx) {
  const int wd = cfg_.word_dim, pd = cfg_.position_dim, td = cfg_.type_dim, gd = cfg_.tag_dim;
  auto& W = params_.get("re.word");
  auto& P1 = params_.get("re.pos1");
  auto& P2 = params_.get("re.pos2");
  auto& P3 = params_.get("re.pos3");
  auto& T = params_.get("re.type");
  auto& G = params_.get("re.tag");
  for (int k = 0; k < enc.n; ++k) {
    int r = 0;
    if (W.trainable) W.grad.col(enc.word[k]) += dx.block(r, k, wd, 1);
    r += wd;
    P1.grad.col(enc.pos1[k]) += dx.block(r, k, pd, 1);
    r += pd;
    P2.grad.col(enc.pos2[k]) += dx.block(r, k, pd, 1);
    r += pd;
    P3.grad.col(enc.pos3[k]) += dx.block(r, k, pd, 1);
    r += pd;
    T.grad.col(enc.type[k]) += dx.block(r, k, td, 1);
    r += td;
    G.grad.col(enc.tag[k]) += dx.block(r, k, gd, 1);
  }
}

// ---- PCNN -------------------------------------------------------------------

Vector RelationModel::pcnn(const Matrix& x, int i, int j, PcnnCache* cache) const {
  const int n = static_cast<int>(x.cols()), dh = cfg_.hidden;
  if (n < 1) throw nn::ShapeError("pcnn needs at least one token");
  nn::require_shape(x.rows() == cfg_.input_dim(), "pcnn input rows");
  if (!(0 <= i && i <= j && j < n)) throw Error("pcnn split points must satisfy 0 <= i <= j < n");
  Matrix h = nn::conv1d(x, params_.find("re.conv_w")->value, params_.find("re.conv_b")->value, cfg_.conv_width);
  nn::PoolResult pools[3] = {nn::max_pool_range(h, 0, i - 1), nn::max_pool_range(h, i, j - 1),
                             nn::max_pool_range(h, j, n - 1)};
  Vector pre(3 * dh);
  for (int k = 0; k < 3; ++k) pre.segment(k * dh, dh) = pools[k].value;
  Vector s = pre.array().tanh();
  if (cache) {
    cache->x = x;
    cache->h = std::move(h);
    for (int k = 0; k < 3; ++k) cache->pools[k] = std::move(pools[k]);
    cache->s = s;
  }
  return s;
}

Matrix RelationModel::pcnn_backward(const PcnnCache& cache, const Vector& ds) {
  const int dh = cfg_.hidden;
  Vector dpre = ds.array() * (1.0 - cache.s.array().square());
  Matrix dh_mat = Matrix::Zero(cache.h.rows(), cache.h.cols());
  for (int k = 0; k < 3; ++k) nn::max_pool_range_backward(cache.pools[k], dpre.segment(k * dh, dh), dh_mat);
  auto& w = params_.get("re.conv_w");
  auto g = nn::conv1d_backward(cache.x, w.value, cfg_.conv_width, dh_mat);
  w.grad += g.dw;
  params_.get("re.conv_b").grad += g.db;
  return g.dx;
}

// ---- C-GCN ------------------------------------------------------------------

namespace {

nn::BiLstmWeights lstm_weights(const nn::ParameterStore& p) {
  auto v = [&](const char* n) -> const Matrix& { return p.find(n)->value; };
  return {v("re.lstm_fwd_wx"), v("re.lstm_fwd_wh"), v("re.lstm_fwd_b"),
          v("re.lstm_bwd_wx"), v("re.lstm_bwd_wh"), v("re.lstm_bwd_b")};
}

}  // namespace

Vector RelationModel::cgcn(const Matrix& x, const Matrix& adjacency, const Span& subject, const Span& object,
                           CgcnCache* cache) const {
  const int n = static_cast<int>(x.cols()), dh = cfg_.hidden;
  if (n < 1) throw nn::ShapeError("cgcn needs at least one token");
  nn::require_shape(x.rows() == cfg_.input_dim(), "cgcn input rows");
  nn::require_shape(adjacency.rows() == n && adjacency.cols() == n, "adjacency must be n x n");
  if (subject.end >= n || object.end >= n) throw nn::ShapeError("entity span beyond sentence");
  CgcnCache local;
  CgcnCache& c = cache ? *cache : local;
  c.n = n;
  Matrix h = nn::bilstm_forward(x, lstm_weights(params_), &c.lstm);
  c.gcn.assign(static_cast<std::size_t>(cfg_.gcn_layers), {});
  for (int l = 0; l < cfg_.gcn_layers; ++l) {
    auto name = "re.gcn" + std::to_string(l);
    h = nn::gcn_layer(h, adjacency, params_.find(name + "_w")->value, params_.find(name + "_b")->value,
                      &c.gcn[static_cast<std::size_t>(l)]);
  }
  c.pools[0] = nn::max_pool_range(h, 0, n - 1);
  c.pools[1] = nn::max_pool_range(h, subject.start, subject.end);
  c.pools[2] = nn::max_pool_range(h, object.start, object.end);
  Vector pre(3 * dh);
  for (int k = 0; k < 3; ++k) pre.segment(k * dh, dh) = c.pools[k].value;
  c.s = pre.array().tanh();
  return c.s;
}

Matrix RelationModel::cgcn_backward(const Matrix& adjacency, const CgcnCache& cache, const Vector& ds) {
  const int dh = cfg_.hidden;
  Vector dpre = ds.array() * (1.0 - cache.s.array().square());
  Matrix dh_mat = Matrix::Zero(dh, cache.n);
  for (int k = 0; k < 3; ++k) nn::max_pool_range_backward(cache.pools[k], dpre.segment(k * dh, dh), dh_mat);
  for (int l = cfg_.gcn_layers - 1; l >= 0; --l) {
    auto name = "re.gcn" + std::to_string(l);
    auto& w = params_.get(name + "_w");
    auto g = nn::gcn_backward(adjacency, w.value, cache.gcn[static_cast<std::size_t>(l)], dh_mat);
    w.grad += g.dw;
    params_.get(name + "_b").grad += g.db;
    dh_mat = std::move(g.dh_prev);
  }
  auto g = nn::bilstm_backward(lstm_weights(params_), cache.lstm, dh_mat);
  params_.get("re.lstm_fwd_wx").grad += g.fwd.dwx;
  params_.get("re.lstm_fwd_wh").grad += g.fwd.dwh;
  params_.get("re.lstm_fwd_b").grad += g.fwd.db;
  params_.get("re.lstm_bwd_wx").grad += g.bwd.dwx;
  params_.get("re.lstm_bwd_wh").grad += g.bwd.dwh;
  params_.get("re.lstm_bwd_b").grad += g.bwd.db;
  return g.dx;
}

// ---- selective gate ---------------------------------------------------------

Vector RelationModel::gate(const Matrix& x, GateCache* cache) const {
  if (x.cols() < 1) throw nn::ShapeError("gate needs at least one token");
  nn::require_shape(x.rows() == cfg_.input_dim(), "gate input rows");
  auto v = [&](const char* n) -> const Matrix& { return params_.find(n)->value; };
  GateCache local;
  GateCache& c = cache ? *cache : local;
  c.x = x;
  c.z1 = nn::affine(x, v("re.att_w1"), v("re.att_b1"));
  c.a1 = nn::tanh(c.z1);
  Matrix q = nn::affine(c.a1, v("re.att_w2"), v("re.att_b2"));
  c.p = cfg_.attention_axis == AttentionAxis::kTokens ? nn::softmax_rows(q)
                                                      : Matrix(nn::softmax_rows(q.transpose()).transpose());
  c.s_att_raw = c.p.cwiseProduct(x).rowwise().sum();
  c.s_att = v("re.att_proj") * c.s_att_raw;
  c.z_g1 = v("re.gate_w1") * c.s_att + v("re.gate_b1");
  c.a_g1 = c.z_g1.cwiseMax(0.0);
  Matrix g = nn::sigmoid(v("re.gate_w2") * c.a_g1 + v("re.gate_b2"));
  c.g = g.col(0);
  return c.g;
}

Matrix RelationModel::gate_backward(const GateCache& c, const Vector& dg) {
  auto& w2 = params_.get("re.gate_w2");
  auto& w1 = params_.get("re.gate_w1");
  auto& proj = params_.get("re.att_proj");
  auto& aw2 = params_.get("re.att_w2");
  auto& aw1 = params_.get("re.att_w1");
  Vector dz2 = dg.array() * c.g.array() * (1.0 - c.g.array());
  w2.grad += dz2 * c.a_g1.transpose();
  params_.get("re.gate_b2").grad += dz2;
  Vector dz1 = (w2.value.transpose() * dz2).array() * (c.z_g1.array() > 0).cast<double>();
  w1.grad += dz1 * c.s_att.transpose();
  params_.get("re.gate_b1").grad += dz1;
  Vector ds_att = w1.value.transpose() * dz1;
  proj.grad += ds_att * c.s_att_raw.transpose();
  Vector draw = proj.value.transpose() * ds_att;
  // s_att_raw(e) = sum_t P(e,t) X(e,t)
  Matrix dp = draw.asDiagonal() * c.x;
  Matrix dx = draw.asDiagonal() * c.p;
  Matrix dq = cfg_.attention_axis == AttentionAxis::kTokens
                  ? nn::softmax_rows_backward(c.p, dp)
                  : Matrix(nn::softmax_rows_backward(c.p.transpose(), dp.transpose()).transpose());
  auto g2 = nn::affine_backward(c.a1, aw2.value, dq);
  aw2.grad += g2.dw;
  params_.get("re.att_b2").grad += g2.db;
  auto g1 = nn::affine_backward(c.x, aw1.value, nn::tanh_backward(c.a1, g2.dx));
  aw1.grad += g1.dw;
  params_.get("re.att_b1").grad += g1.db;
  return dx + g1.dx;
}

// ---- prediction -------------------------------------------------------------

Vector RelationModel::predict(const Vector& v, PredictCache* cache) const {
  nn::require_shape(v.size() == 6 * cfg_.hidden, "bag vector must have 6 d_h entries");
  auto p = [&](const char* n) -> const Matrix& { return params_.find(n)->value; };
  Vector z1 = p("re.out_w1") * v + p("re.out_b1");
  Vector a1 = z1.cwiseMax(0.0);
  Matrix r = nn::sigmoid(p("re.out_w2") * a1 + p("re.out_b2"));
  if (cache) *cache = {v, z1, a1, r.col(0)};
  return r.col(0);
}

Vector RelationModel::predict_backward(const PredictCache& c, const Vector& dr) {
  auto& w2 = params_.get("re.out_w2");
  auto& w1 = params_.get("re.out_w1");
  Vector dz2 = dr.array() * c.r.array() * (1.0 - c.r.array());
  w2.grad += dz2 * c.a1.transpose();
  params_.get("re.out_b2").grad += dz2;
  Vector dz1 = (w2.value.transpose() * dz2).array() * (c.z1.array() > 0).cast<double>();
  w1.grad += dz1 * c.v.transpose();
  params_.get("re.out_b1").grad += dz1;
  return w1.value.transpose() * dz1;
}

// ---- bag --------------------------------------------------------------------

BagForward RelationModel::forward(const std::vector<Instance>& bag) const {
  if (bag.empty()) throw Error("cannot score an empty bag");
  const int dh = cfg_.hidden;
  BagForward f;
  f.sentences.resize(bag.size());
  std::vector<Vector> s, g;
  for (std::size_t k = 0; k < bag.size(); ++k) {
    auto& c = f.sentences[k];
    const auto& inst = bag[k];
    c.x = embed(inst.tokens);
    Vector sp = pcnn(c.x, inst.i, inst.j, &c.pcnn);
    Vector sg = cgcn(c.x, inst.adjacency, inst.subject, inst.object, &c.cgcn);
    c.s.resize(6 * dh);
    c.s << sp, sg;
    c.g = gate(c.x, &c.gate);
    s.push_back(c.s);
    g.push_back(c.g);
  }
  f.v = aggregate_bag(s, g);
  f.scores = predict(f.v, &f.predict);
  return f;
}

double RelationModel::backward(const std::vector<Instance>& bag, const BagForward& f, const Vector& gold) {
  const int dh = cfg_.hidden;
  LossGrads lg;
  double loss = sliding_margin_loss(f.scores, gold, threshold(), cfg_.margin, cfg_.na_weight, &lg);
  params_.get("re.threshold").grad(0, 0) += lg.d_threshold;
  Vector dv = predict_backward(f.predict, lg.d_scores);
  for (std::size_t k = 0; k < bag.size(); ++k) {
    const auto& c = f.sentences[k];
    Vector ds = c.g.cwiseProduct(dv);
    Vector dg = c.s.cwiseProduct(dv);
    Matrix dx = pcnn_backward(c.pcnn, ds.head(3 * dh));
    dx += cgcn_backward(bag[k].adjacency, c.cgcn, ds.tail(3 * dh));
    dx += gate_backward(c.gate, dg);
    embed_backward(bag[k].tokens, dx);
  }
  return loss;
}

// ---- checkpoint -------------------------------------------------------------

nn::Checkpoint RelationModel::to_checkpoint() const {
  nn::Checkpoint ck;
  auto& m = ck.meta;
  m["kind"] = "relation-model";
  m["word_dim"] = std::to_string(cfg_.word_dim);
  m["position_dim"] = std::to_string(cfg_.position_dim);
  m["type_dim"] = std::to_string(cfg_.type_dim);
  m["tag_dim"] = std::to_string(cfg_.tag_dim);
  m["hidden"] = std::to_string(cfg_.hidden);
  m["conv_width"] = std::to_string(cfg_.conv_width);
  m["gcn_layers"] = std::to_string(cfg_.gcn_layers);
  m["max_position"] = std::to_string(cfg_.max_position);
  m["max_bag_size"] = std::to_string(cfg_.max_bag_size);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", cfg_.margin);
  m["margin"] = buf;
  std::snprintf(buf, sizeof buf, "%.17g", cfg_.na_weight);
  m["na_weight"] = buf;
  m["attention_axis"] = cfg_.attention_axis == AttentionAxis::kTokens ? "tokens" : "features";
  m["sdp_anchor"] = cfg_.sdp.anchor == SdpAnchor::kFirst ? "first" : "last";
  m["sdp_include_internal"] = cfg_.sdp.include_internal ? "1" : "0";
  m["word_trainable"] = params_.find("re.word")->trainable ? "1" : "0";
  ck.vocabs["words"] = vocab_.words;
  ck.vocabs["types"] = vocab_.types;
  ck.vocabs["tags"] = vocab_.tags;
  ck.vocabs["relations"] = vocab_.relations;
  ck.add_parameters(params_);
  return ck;
}

RelationModel RelationModel::from_checkpoint(const nn::Checkpoint& ck) {
  if (ck.require_meta("kind") != "relation-model") throw Error("checkpoint is not a relation model");
  RelationModel model;
  auto& c = model.cfg_;
  auto i = [&](const char* k) { return std::stoi(ck.require_meta(k)); };
  c.word_dim = i("word_dim");
  c.position_dim = i("position_dim");
  c.type_dim = i("type_dim");
  c.tag_dim = i("tag_dim");
  c.hidden = i("hidden");
  c.conv_width = i("conv_width");
  c.gcn_layers = i("gcn_layers");
  c.max_position = i("max_position");
  c.max_bag_size = i("max_bag_size");
  c.margin = std::stod(ck.require_meta("margin"));
  c.na_weight = std::stod(ck.require_meta("na_weight"));
  c.attention_axis = ck.require_meta("attention_axis") == "tokens" ? AttentionAxis::kTokens : AttentionAxis::kFeatures;
  c.sdp.anchor = ck.require_meta("sdp_anchor") == "first" ? SdpAnchor::kFirst : SdpAnchor::kLast;
  c.sdp.include_internal = ck.require_meta("sdp_include_internal") == "1";
  c.validate();
  auto vocab = [&](const char* name) {
    auto it = ck.vocabs.find(name);
    if (it == ck.vocabs.end()) throw Error(std::string("relation checkpoint lacks vocabulary ") + name);
    return it->second;
  };
  model.vocab_.words = vocab("words");
  model.vocab_.types = vocab("types");
  model.vocab_.tags = vocab("tags");
  model.vocab_.relations = vocab("relations");
  model.vocab_.index();
  model.build(nullptr, nullptr);
  ck.restore_parameters(model.params_);
  model.params_.get("re.word").trainable = ck.require_meta("word_trainable") == "1";
  return model;
}

// ---- wrappers ---------------------------------------------------------------

Matrix encode_tokens(const RelationModel& model, const Sentence& sentence, const Span& subject, const Span& object,
                     const KnowledgeBase& kb) {
  return model.embed(model.prepare(sentence, subject, object, kb).tokens);
}

Vector pcnn_encode(const RelationModel& model, const Matrix& x, int i, int j) { return model.pcnn(x, i, j, nullptr); }

Vector cgcn_encode(const RelationModel& model, const Matrix& x, const Matrix& adjacency, const Span& subject,
                   const Span& object) {
  return model.cgcn(x, adjacency, subject, object, nullptr);
}

Vector selective_gate(const RelationModel& model, const Matrix& x) { return model.gate(x, nullptr); }

Prediction predict_bag(const RelationModel& model, const Vector& v) {
  Prediction p;
  p.scores = model.predict(v, nullptr);
  const double b = model.threshold();
  for (int k = 0; k < p.scores.size(); ++k) {
    if (p.scores(k) > b) p.relations.push_back(model.vocab().relations[static_cast<std::size_t>(k)]);
  }
  return p;
}

Prediction predict_bag(const RelationModel& model, const std::vector<Instance>& bag) {
  return predict_bag(model, model.forward(bag).v);
}

// ---- training ---------------------------------------------------------------

namespace {

const Span* find_entity_span(const Sentence& s, const EntityId& e) {
  for (const auto& sp : s.spans) {
    if (sp.entity && *sp.entity == e) return &sp;
  }
  return nullptr;
}

}  // namespace

std::vector<LabeledBag> prepare_bags(const RelationModel& model, const std::vector<Bag>& bags,
                                     const std::map<std::string, const Sentence*>& sentences,
                                     const KnowledgeBase& kb) {
  std::vector<LabeledBag> out;
  for (const auto& bag : bags) {
    LabeledBag lb;
    lb.subject = bag.subject;
    lb.object = bag.object;
    lb.gold = Vector::Zero(model.relation_count());
    for (const auto& r : bag.labels) {
      int k = model.vocab().relation(r);
      if (k >= 0) lb.gold(k) = 1.0;
    }
    for (const auto& id : bag.sentences) {
      auto it = sentences.find(id);
      if (it == sentences.end()) continue;
      const Span* s = find_entity_span(*it->second, bag.subject);
      const Span* o = find_entity_span(*it->second, bag.object);
      if (!s || !o || s->overlaps(*o)) continue;
      lb.instances.push_back(model.prepare(*it->second, *s, *o, kb));
      if (static_cast<int>(lb.instances.size()) >= model.config().max_bag_size) break;
    }
    if (!lb.instances.empty()) out.push_back(std::move(lb));
  }
  return out;
}

ReMetrics micro_metrics(const std::vector<std::vector<RelationId>>& predicted,
                        const std::vector<std::vector<RelationId>>& gold) {
  nn::require_shape(predicted.size() == gold.size(), "one prediction per gold bag");
  ReMetrics m;
  m.bags = static_cast<int>(gold.size());
  int exact = 0;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    std::set<RelationId> p(predicted[k].begin(), predicted[k].end()), g(gold[k].begin(), gold[k].end());
    for (const auto& r : p) m.true_positive += g.count(r);
    m.predicted += static_cast<long long>(p.size());
    m.gold += static_cast<long long>(g.size());
    exact += p == g;
  }
  m.precision = m.predicted ? static_cast<double>(m.true_positive) / static_cast<double>(m.predicted) : 0.0;
  m.recall = m.gold ? static_cast<double>(m.true_positive) / static_cast<double>(m.gold) : 0.0;
  m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  m.exact_accuracy = m.bags ? static_cast<double>(exact) / m.bags : 0.0;
  return m;
}

ReMetrics evaluate_relation_model(const RelationModel& model, const std::vector<LabeledBag>& bags) {
  std::vector<std::vector<RelationId>> predicted, gold;
  for (const auto& b : bags) {
    predicted.push_back(predict_bag(model, b.instances).relations);
    std::vector<RelationId> g;
    for (int k = 0; k < b.gold.size(); ++k) {
      if (b.gold(k) > 0.5) g.push_back(model.vocab().relations[static_cast<std::size_t>(k)]);
    }
    gold.push_back(std::move(g));
  }
  return micro_metrics(predicted, gold);
}

RelationModel train_relation_model(const std::vector<LabeledBag>& train, const std::vector<LabeledBag>& valid,
                                   RelationModel model, ReTrainingTrace* trace) {
  if (train.empty()) throw Error("relation model: no training bags");
  const auto& cfg = model.config();
  nn::Adam adam({cfg.learning_rate});
  Rng rng(derive_seed(cfg.seed, "relation-train"));
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Matrix> best;
  double best_f1 = -1.0;
  auto snapshot = [&]() {
    best.clear();
    for (const auto& p : model.params().all()) best.push_back(p.value);
  };
  model.params().zero_grad();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    int in_batch = 0;
    for (auto idx : order) {
      const auto& bag = train[idx];
      auto f = model.forward(bag.instances);
      total += model.backward(bag.instances, f, bag.gold);
      if (++in_batch == cfg.batch_size) {
        adam.step(model.params());
        in_batch = 0;
      }
    }
    if (in_batch > 0) adam.step(model.params());
    double mean = total / static_cast<double>(train.size());
    if (!std::isfinite(mean)) throw Error("relation model: non-finite loss at epoch " + std::to_string(epoch));
    if (trace) trace->epoch_loss.push_back(mean);
    if (!valid.empty()) {
      double f1 = evaluate_relation_model(model, valid).f1;
      if (trace) trace->valid_f1.push_back(f1);
      if (f1 > best_f1) {
        best_f1 = f1;
        snapshot();
        if (trace) trace->best_epoch = epoch;
      }
    }
  }
  if (!best.empty()) {
    std::size_t k = 0;
    for (auto& p : model.params().all()) p.value = best[k++];
  } else if (trace) {
    trace->best_epoch = cfg.epochs - 1;
  }
  return model;
}

// ---- validation and extraction ----------------------------------------------

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::kAccept: return "accept";
    case Verdict::kUnknownRelation: return "unknown-relation";
    case Verdict::kUnknownEntity: return "unknown-entity";
    case Verdict::kSubjectType: return "subject-type";
    case Verdict::kObjectType: return "object-type";
  }
  return "?";
}

Verdict validate_triple(const Triple& t, const KnowledgeBase& kb, const FactTypeTemplate& tmpl) {
  if (!tmpl.has_relation(t.relation)) return Verdict::kUnknownRelation;
  if (!kb.has_entity(t.subject) || !kb.has_entity(t.object)) return Verdict::kUnknownEntity;
  const auto& e = tmpl.entry(t.relation);
  if (!e.subject_types.count(kb.type_of(t.subject))) return Verdict::kSubjectType;
  if (!e.object_types.count(kb.type_of(t.object))) return Verdict::kObjectType;
  return Verdict::kAccept;
}

Extraction extract(const std::vector<Sentence>& linked, const KnowledgeBase& kb, const RelationModel& model,
                   const FactTypeTemplate& tmpl) {
  std::map<std::pair<EntityId, EntityId>, std::vector<Instance>> bags;
  for (const auto& s : linked) {
    std::vector<const Span*> spans;
    std::set<EntityId> seen;
    for (const auto& sp : s.spans) {
      if (sp.entity && kb.has_entity(*sp.entity) && seen.insert(*sp.entity).second) spans.push_back(&sp);
    }
    for (const Span* a : spans) {
      for (const Span* b : spans) {
        if (a == b || a->overlaps(*b)) continue;
        auto& bag = bags[{*a->entity, *b->entity}];
        if (static_cast<int>(bag.size()) < model.config().max_bag_size) bag.push_back(model.prepare(s, *a, *b, kb));
      }
    }
  }
  Extraction out;
  for (const auto& [pair, instances] : bags) {
    auto p = predict_bag(model, instances);
    for (const auto& r : p.relations) {
      ExtractedTriple et;
      et.triple = {pair.first, r, pair.second};
      et.confidence = p.scores(model.vocab().relation(r));
      for (const auto& inst : instances) et.sentence_ids.push_back(inst.sentence_id);
      auto verdict = validate_triple(et.triple, kb, tmpl);
      if (verdict == Verdict::kAccept) {
        out.accepted.push_back(std::move(et));
      } else {
        out.rejected.push_back({std::move(et), verdict});
      }
    }
  }
  return out;
}

namespace {

std::string format_confidence(double c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", c);
  return buf;
}

}  // namespace

void write_triples_tsv(const std::filesystem::path& file, const std::vector<ExtractedTriple>& triples) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  for (const auto& t : triples) {
    out << t.triple.subject << '\t' << t.triple.relation << '\t' << t.triple.object << '\t'
        << format_confidence(t.confidence) << '\t' << join(t.sentence_ids, ",") << '\n';
  }
}

void write_rejected_tsv(const std::filesystem::path& file, const std::vector<RejectedTriple>& rejected) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  for (const auto& r : rejected) {
    const auto& t = r.extracted;
    out << t.triple.subject << '\t' << t.triple.relation << '\t' << t.triple.object << '\t'
        << format_confidence(t.confidence) << '\t' << to_string(r.reason) << '\n';
  }
}

std::vector<ExtractedTriple> read_triples_tsv(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open " + file.string());
  std::vector<ExtractedTriple> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != 5) throw Error(file.string() + ":" + std::to_string(lineno) + ": expected 5 fields");
    ExtractedTriple t;
    t.triple = {f[0], f[1], f[2]};
    t.confidence = std::stod(f[3]);
    if (!f[4].empty()) t.sentence_ids = split(f[4], ',');
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace kbc
