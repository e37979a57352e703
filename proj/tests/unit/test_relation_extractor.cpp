#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "kbc/relation_extractor.hpp"
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"

using namespace kbc;
using kbc::testing::gradient_error;
using kbc::testing::kb_from_text;
using kbc::testing::make_sentence;
using kbc::testing::make_span;
using nn::Matrix;
using nn::Vector;

namespace {

constexpr double kGradTol = 1e-4;

const char* kEntities =
    "P1\tPerson\tAnn Lee\t\nP2\tPerson\tBo Kim\t\nP3\tPerson\tCy Park\t\n"
    "W1\tWork\tRed Sky\t\nW2\tWork\tBlue Sea\t\nW3\tWork\tGold Sun\t\n";
const char* kTriples = "W1\tstarring\tP1\nP2\tdirected\tW2\nW3\tstarring\tP3\nP3\tdirected\tW1\n";

REConfig tiny_config() {
  REConfig c;
  c.word_dim = 4;
  c.position_dim = 2;
  c.type_dim = 2;
  c.tag_dim = 2;
  c.hidden = 4;
  c.conv_width = 3;
  c.gcn_layers = 2;
  c.max_position = 6;
  return c;
}

Span linked_span(const Sentence& s, int a, int b, const std::string& entity) {
  auto sp = make_span(s, a, b);
  sp.entity = entity;
  return sp;
}

// A random tree sentence with two (or three) linked single-token spans.
Sentence random_instance_sentence(std::mt19937_64& rng, int n, bool third) {
  auto s = kbc::testing::random_tree_sentence(rng, n);
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  s.spans.push_back(linked_span(s, idx[0], idx[0], "P1"));
  s.spans.push_back(linked_span(s, idx[1], idx[1], "W1"));
  if (third) s.spans.push_back(linked_span(s, idx[2], idx[2], "P2"));
  std::sort(s.spans.begin(), s.spans.end(), [](const Span& a, const Span& b) { return a.start < b.start; });
  for (auto& t : s.tokens) t.pos = t.index % 2 ? "NN" : "VB";
  return s;
}

const Span& span_of(const Sentence& s, const std::string& e) {
  for (const auto& sp : s.spans) {
    if (*sp.entity == e) return sp;
  }
  throw Error("missing span");
}

struct Harness {
  KnowledgeBase kb = kb_from_text(kEntities, kTriples);
  std::vector<Sentence> sentences;
  RelationModel model;

  explicit Harness(REConfig cfg = tiny_config(), std::uint64_t seed = 3) {
    std::mt19937_64 rng(seed);
    sentences.push_back(random_instance_sentence(rng, 7, true));
    sentences.push_back(random_instance_sentence(rng, 5, false));
    model = RelationModel(cfg, Vocabularies::build(sentences, kb, nullptr), nullptr);
    // Spread parameters away from zero so ReLU and max kinks are rare.
    for (auto& p : model.params().all()) {
      if (p.name == "re.threshold") continue;
      p.value = kbc::testing::random_matrix(rng, p.rows(), p.cols(), 0.5);
    }
  }

  Instance instance(std::size_t k, bool swap = false) {
    const auto& s = sentences[k];
    return swap ? model.prepare(s, span_of(s, "W1"), span_of(s, "P1"), kb)
                : model.prepare(s, span_of(s, "P1"), span_of(s, "W1"), kb);
  }
};

}  // namespace

// ---- token encoding ---------------------------------------------------------

TEST_CASE("third position is -1 everywhere without other entities") {
  Harness h;
  auto s = make_sentence({"a", "b", "c", "d", "e"}, {});
  auto subj = linked_span(s, 0, 0, "P1");
  auto obj = linked_span(s, 3, 4, "W1");
  s.spans = {subj, obj};
  auto inst = h.model.prepare(s, subj, obj, h.kb);
  for (int d : inst.tokens.dist3) CHECK(d == -1);
  CHECK(inst.tokens.dist1 == std::vector<int>{0, 1, 2, 3, 4});
  CHECK(inst.tokens.dist2 == std::vector<int>{-3, -2, -1, 0, 0});
  CHECK(inst.i == 0);
  CHECK(inst.j == 3);
}

TEST_CASE("third position is the distance to the nearest other entity") {
  Harness h;
  auto s = make_sentence({"a", "b", "c", "d", "e", "f", "g"}, {});
  auto subj = linked_span(s, 0, 0, "P1");
  auto obj = linked_span(s, 1, 1, "W1");
  s.spans = {subj, obj, linked_span(s, 5, 5, "P2")};
  auto inst = h.model.prepare(s, subj, obj, h.kb);
  CHECK(inst.tokens.dist3[3] == 2);
  CHECK(inst.tokens.dist3[5] == 0);
  CHECK(inst.tokens.dist3[6] == 1);
  // Tokens next to the subject sit at -1 / +1.
  auto mid = linked_span(s, 3, 3, "P1");
  auto enc = h.model.prepare(s, mid, obj, h.kb).tokens;
  CHECK(enc.dist1[2] == -1);
  CHECK(enc.dist1[4] == 1);
  // Clipping at max_position.
  CHECK(std::abs(relative_distance(100, mid)) > 6);
  REConfig cfg = tiny_config();
  cfg.max_position = 2;
  Harness clipped(cfg);
  auto far = clipped.model.prepare(s, subj, obj, clipped.kb).tokens;
  CHECK(far.dist1[6] == 2);
  CHECK(far.dist2[6] == 2);
  CHECK_THROWS_AS(h.model.prepare(s, subj, linked_span(s, 0, 1, "W1"), h.kb), Error);
}

// ---- encoders ---------------------------------------------------------------

TEST_CASE("pcnn segment maxima by hand") {
  REConfig cfg = tiny_config();
  cfg.hidden = 2;
  cfg.conv_width = 1;
  Harness h(cfg);
  const int de = cfg.input_dim();
  auto& w = h.model.params().get("re.conv_w");
  w.value.setZero();
  w.value(0, 0) = 1.0;  // filter 0 copies feature 0
  w.value(1, 1) = 1.0;  // filter 1 copies feature 1
  h.model.params().get("re.conv_b").value.setZero();
  Matrix x = Matrix::Zero(de, 3);
  x.row(0) << 0.3, -0.2, 0.9;
  x.row(1) << -0.5, 0.4, 0.1;
  // i = 1, j = 2: segments {0}, {1}, {2}.
  Vector s = pcnn_encode(h.model, x, 1, 2);
  REQUIRE(s.size() == 6);
  CHECK(s(0) == doctest::Approx(std::tanh(0.3)));
  CHECK(s(1) == doctest::Approx(std::tanh(-0.5)));
  CHECK(s(2) == doctest::Approx(std::tanh(-0.2)));
  CHECK(s(3) == doctest::Approx(std::tanh(0.4)));
  CHECK(s(4) == doctest::Approx(std::tanh(0.9)));
  CHECK(s(5) == doctest::Approx(std::tanh(0.1)));
  // i = 0: the first segment is empty, its block is tanh(0) = 0.
  Vector e = pcnn_encode(h.model, x, 0, 1);
  CHECK(e(0) == 0.0);
  CHECK(e(1) == 0.0);
  CHECK(e(2) == doctest::Approx(std::tanh(0.3)));
  CHECK(e(4) == doctest::Approx(std::tanh(0.9)));
  CHECK_THROWS_AS(pcnn_encode(h.model, Matrix(de, 0), 0, 0), nn::ShapeError);
}

TEST_CASE("encoders produce the documented dimensions and ranges") {
  Harness h;
  auto inst = h.instance(0);
  Matrix x = h.model.embed(inst.tokens);
  CHECK(x.rows() == h.model.config().input_dim());
  CHECK(x.cols() == inst.tokens.n);
  Vector sp = pcnn_encode(h.model, x, inst.i, inst.j);
  Vector sg = cgcn_encode(h.model, x, inst.adjacency, inst.subject, inst.object);
  Vector g = selective_gate(h.model, x);
  CHECK(sp.size() == 3 * 4);
  CHECK(sg.size() == 3 * 4);
  CHECK(g.size() == 6 * 4);
  CHECK((sp.array().abs() < 1).all());
  CHECK((g.array() > 0).all());
  CHECK((g.array() < 1).all());
  auto f = h.model.forward({h.instance(0), h.instance(1)});
  CHECK(f.v.size() == 24);
  CHECK(f.scores.size() == h.model.relation_count());
  CHECK((f.scores.array() > 0).all());
  CHECK((f.scores.array() < 1).all());
  CHECK_THROWS_AS(cgcn_encode(h.model, x, Matrix::Identity(2, 2), inst.subject, inst.object), nn::ShapeError);
}

TEST_CASE("cgcn degenerate depth and identity adjacency") {
  REConfig cfg = tiny_config();
  cfg.gcn_layers = 0;
  Harness h0(cfg);
  auto inst = h0.instance(0);
  Matrix x = h0.model.embed(inst.tokens);
  // With no GCN layers the pools read the BiLSTM output directly.
  const auto& p = h0.model.params();
  auto v = [&](const char* n) -> const Matrix& { return p.find(n)->value; };
  Matrix lstm = nn::bilstm_forward(x, {v("re.lstm_fwd_wx"), v("re.lstm_fwd_wh"), v("re.lstm_fwd_b"), v("re.lstm_bwd_wx"),
                                       v("re.lstm_bwd_wh"), v("re.lstm_bwd_b")},
                                   nullptr);
  Vector s = cgcn_encode(h0.model, x, inst.adjacency, inst.subject, inst.object);
  CHECK(s(0) == doctest::Approx(std::tanh(lstm.row(0).maxCoeff())));
  CHECK(s(4) == doctest::Approx(std::tanh(lstm(0, inst.subject.start))));

  cfg.gcn_layers = 1;
  Harness h1(cfg);
  auto inst1 = h1.instance(0);
  Matrix x1 = h1.model.embed(inst1.tokens);
  const auto& q = h1.model.params();
  auto u = [&](const char* n) -> const Matrix& { return q.find(n)->value; };
  Matrix base = nn::bilstm_forward(x1, {u("re.lstm_fwd_wx"), u("re.lstm_fwd_wh"), u("re.lstm_fwd_b"), u("re.lstm_bwd_wx"),
                                        u("re.lstm_bwd_wh"), u("re.lstm_bwd_b")},
                                   nullptr);
  Matrix per_token = nn::relu(nn::affine(base, u("re.gcn0_w"), u("re.gcn0_b")));
  Matrix eye = Matrix::Identity(x1.cols(), x1.cols());
  Vector si = cgcn_encode(h1.model, x1, eye, inst1.subject, inst1.object);
  CHECK(si(0) == doctest::Approx(std::tanh(per_token.row(0).maxCoeff())));
}

TEST_CASE("gate edge cases") {
  Harness h;
  std::mt19937_64 rng(1);
  Matrix x = kbc::testing::random_matrix(rng, h.model.config().input_dim(), 1);
  GateCache c;
  h.model.gate(x, &c);
  CHECK(c.p.isApprox(Matrix::Ones(x.rows(), 1)));
  for (auto& p : h.model.params().all()) p.value.setZero();
  Vector g = selective_gate(h.model, kbc::testing::random_matrix(rng, x.rows(), 4));
  CHECK(g.isApprox(Vector::Constant(24, 0.5)));
}

TEST_CASE("aggregate_bag: identity, zero gate, loop oracle") {
  std::mt19937_64 rng(8);
  Vector s = kbc::testing::random_matrix(rng, 6, 1);
  CHECK(aggregate_bag({s}, {Vector::Ones(6)}) == s);
  Vector s2 = kbc::testing::random_matrix(rng, 6, 1), g2 = kbc::testing::random_matrix(rng, 6, 1);
  CHECK(aggregate_bag({s, s2}, {Vector::Zero(6), g2}).isApprox(g2.cwiseProduct(s2)));
  for (int trial = 0; trial < 100; ++trial) {
    int c = std::uniform_int_distribution<int>(1, 6)(rng);
    std::vector<Vector> ss, gs;
    for (int k = 0; k < c; ++k) {
      ss.push_back(kbc::testing::random_matrix(rng, 12, 1));
      gs.push_back(kbc::testing::random_matrix(rng, 12, 1));
    }
    Vector got = aggregate_bag(ss, gs);
    for (int e = 0; e < 12; ++e) {
      double want = 0;
      for (int k = 0; k < c; ++k) want += gs[k](e) * ss[k](e);
      CHECK(got(e) == doctest::Approx(want).epsilon(1e-12));
    }
  }
  CHECK_THROWS_AS(aggregate_bag({}, {}), Error);
}

TEST_CASE("bag permutation leaves v and predictions bit-identical") {
  Harness h;
  std::vector<Instance> bag = {h.instance(0), h.instance(1), h.instance(0, true)};
  auto a = h.model.forward(bag);
  std::vector<Instance> rev(bag.rbegin(), bag.rend());
  auto b = h.model.forward(rev);
  CHECK(a.v == b.v);
  CHECK(a.scores == b.scores);
}

// ---- prediction and loss ----------------------------------------------------

TEST_CASE("threshold rule") {
  Harness h;
  Vector v = Vector::Constant(24, 0.1);
  h.model.params().get("re.threshold").value(0, 0) = 1.0;
  CHECK(predict_bag(h.model, v).relations.empty());
  h.model.params().get("re.threshold").value(0, 0) = 0.0;
  CHECK(predict_bag(h.model, v).relations == h.model.vocab().relations);
}

TEST_CASE("sliding-margin loss arithmetic") {
  Vector r(1), y1(1), y0(1);
  r << 0.9;
  y1 << 1;
  y0 << 0;
  CHECK(sliding_margin_loss(r, y1, 0.5, 0.1, 0.5) == 0.0);
  CHECK(std::abs(sliding_margin_loss(r, y0, 0.5, 0.1, 0.5) - 0.125) < 1e-9);
}

TEST_CASE("sliding-margin loss is zero exactly when every score clears its margin") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 500; ++trial) {
    Vector r(5), y(5);
    for (int k = 0; k < 5; ++k) {
      r(k) = u(rng);
      y(k) = u(rng) < 0.4;
    }
    double b = 0.2 + 0.6 * u(rng), gamma = 0.1;
    bool satisfied = true;
    for (int k = 0; k < 5; ++k) satisfied = satisfied && (y(k) > 0.5 ? r(k) >= b + gamma : r(k) <= b - gamma);
    CHECK((sliding_margin_loss(r, y, b, gamma, 0.5) == 0.0) == satisfied);
  }
}

TEST_CASE("sliding-margin loss gradients for scores and threshold") {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.05, 0.95);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix r(6, 1), y(6, 1);
    for (int k = 0; k < 6; ++k) {
      r(k) = u(rng);
      y(k) = k % 2;
    }
    Matrix b(1, 1);
    b(0, 0) = u(rng);
    LossGrads g;
    sliding_margin_loss(r.col(0), y.col(0), b(0, 0), 0.1, 0.5, &g);
    auto f = [&]() { return sliding_margin_loss(r.col(0), y.col(0), b(0, 0), 0.1, 0.5); };
    CHECK(gradient_error(r, Matrix(g.d_scores), f) < kGradTol);
    CHECK(gradient_error(b, Matrix::Constant(1, 1, g.d_threshold), f) < kGradTol);
  }
}

// ---- gradient checks --------------------------------------------------------

namespace {

// Checks every entry of every parameter against finite differences of the
// bag loss and returns the worst relative error.
double full_model_gradient_error(Harness& h, const std::vector<Instance>& bag, const Vector& gold) {
  auto& model = h.model;
  model.params().zero_grad();
  auto fwd = model.forward(bag);
  model.backward(bag, fwd, gold);
  auto loss = [&]() {
    auto f = model.forward(bag);
    return sliding_margin_loss(f.scores, gold, model.threshold(), model.config().margin, model.config().na_weight);
  };
  double worst = 0;
  for (auto& p : model.params().all()) {
    Matrix analytic = p.grad;
    double err = gradient_error(p.value, analytic, loss);
    if (err >= kGradTol) MESSAGE(p.name << " rel err " << err);
    worst = std::max(worst, err);
  }
  return worst;
}

}  // namespace

TEST_CASE("stage gradients match finite differences") {
  Harness h;
  auto inst = h.instance(0);
  Matrix x = h.model.embed(inst.tokens);
  std::mt19937_64 rng(21);
  Vector up24 = kbc::testing::random_matrix(rng, 24, 1);
  Vector up12 = up24.head(12);

  SUBCASE("pcnn") {
    PcnnCache c;
    h.model.params().zero_grad();
    h.model.pcnn(x, inst.i, inst.j, &c);
    Matrix dx = h.model.pcnn_backward(c, up12);
    auto f = [&]() { return h.model.pcnn(x, inst.i, inst.j, nullptr).dot(up12); };
    CHECK(gradient_error(x, dx, f) < kGradTol);
    auto& w = h.model.params().get("re.conv_w");
    CHECK(gradient_error(w.value, Matrix(w.grad), f) < kGradTol);
  }
  SUBCASE("cgcn") {
    CgcnCache c;
    h.model.params().zero_grad();
    h.model.cgcn(x, inst.adjacency, inst.subject, inst.object, &c);
    Matrix dx = h.model.cgcn_backward(inst.adjacency, c, up12);
    auto f = [&]() { return h.model.cgcn(x, inst.adjacency, inst.subject, inst.object, nullptr).dot(up12); };
    CHECK(gradient_error(x, dx, f) < kGradTol);
    for (const char* n : {"re.gcn0_w", "re.gcn1_b", "re.lstm_fwd_wx", "re.lstm_bwd_wh"}) {
      auto& p = h.model.params().get(n);
      CHECK(gradient_error(p.value, Matrix(p.grad), f) < kGradTol);
    }
  }
  SUBCASE("gate, both attention axes") {
    for (auto axis : {AttentionAxis::kTokens, AttentionAxis::kFeatures}) {
      REConfig cfg = tiny_config();
      cfg.attention_axis = axis;
      Harness ha(cfg);
      Matrix xa = ha.model.embed(ha.instance(0).tokens);
      GateCache c;
      ha.model.params().zero_grad();
      ha.model.gate(xa, &c);
      Matrix dx = ha.model.gate_backward(c, up24);
      auto f = [&]() { return ha.model.gate(xa, nullptr).dot(up24); };
      CHECK(gradient_error(xa, dx, f) < kGradTol);
      for (const char* n : {"re.att_w1", "re.att_b2", "re.att_proj", "re.gate_w1", "re.gate_w2"}) {
        auto& p = ha.model.params().get(n);
        CHECK(gradient_error(p.value, Matrix(p.grad), f) < kGradTol);
      }
    }
  }
}

TEST_CASE("full model gradient on a two-sentence bag, including the threshold") {
  for (std::uint64_t seed : {3u, 5u}) {
    Harness h(tiny_config(), seed);
    std::vector<Instance> bag = {h.instance(0), h.instance(1)};
    Vector gold = Vector::Zero(h.model.relation_count());
    gold(0) = 1;
    // Push the threshold so both loss branches are active.
    h.model.params().get("re.threshold").value(0, 0) = 0.45;
    CHECK(full_model_gradient_error(h, bag, gold) < kGradTol);
  }
}

// ---- validation -------------------------------------------------------------

TEST_CASE("type templates accept and reject by role") {
  auto kb = kb_from_text("W\tWork\tfilm\t\nA\tAgent\tactor\t\n", "W\tstarred\tA\n");
  auto tmpl = kb.build_fact_type_templates();
  CHECK(validate_triple({"A", "starred", "W"}, kb, tmpl) == Verdict::kSubjectType);
  CHECK(validate_triple({"W", "starred", "A"}, kb, tmpl) == Verdict::kAccept);
  CHECK(validate_triple({"W", "directed", "A"}, kb, tmpl) == Verdict::kUnknownRelation);
  CHECK(validate_triple({"W", "starred", "ZZ"}, kb, tmpl) == Verdict::kUnknownEntity);
}

TEST_CASE("every KB triple passes its own template; type swaps are rejected") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    auto kb = kbc::testing::random_kb(rng, 30, 80, 4, 4);
    auto tmpl = kb.build_fact_type_templates();
    for (const auto& t : kb.triples()) CHECK(validate_triple(t, kb, tmpl) == Verdict::kAccept);
    for (const auto& t : kb.triples()) {
      Triple swapped{t.object, t.relation, t.subject};
      const auto& e = tmpl.entry(t.relation);
      bool admissible = e.subject_types.count(kb.type_of(t.object)) && e.object_types.count(kb.type_of(t.subject));
      CHECK((validate_triple(swapped, kb, tmpl) == Verdict::kAccept) == admissible);
    }
  }
}

// ---- training and extraction ------------------------------------------------

namespace {

// Relation is fully determined by the verb between the two names.
struct PlantedCorpus {
  KnowledgeBase kb;
  std::vector<Sentence> sentences;
  std::vector<Bag> bags;

  PlantedCorpus() {
    std::string ents, triples;
    for (int i = 0; i < 12; ++i) {
      ents += "P" + std::to_string(i) + "\tPerson\tperson" + std::to_string(i) + "\t\n";
      ents += "W" + std::to_string(i) + "\tWork\twork" + std::to_string(i) + "\t\n";
    }
    std::mt19937_64 rng(2);
    std::set<std::pair<int, int>> used;
    std::vector<std::tuple<int, int, int>> facts;
    while (facts.size() < 40) {
      int p = std::uniform_int_distribution<int>(0, 11)(rng), w = std::uniform_int_distribution<int>(0, 11)(rng);
      if (!used.insert({p, w}).second) continue;
      int rel = std::uniform_int_distribution<int>(0, 1)(rng);
      facts.emplace_back(p, w, rel);
      triples += "P" + std::to_string(p) + (rel ? "\tdirected\tW" : "\twrote\tW") + std::to_string(w) + "\n";
    }
    kb = kb_from_text(ents, triples);
    int id = 0;
    for (auto [p, w, rel] : facts) {
      for (int rep = 0; rep < 2; ++rep) {
        auto s = make_sentence({"yesterday", "person" + std::to_string(p), rel ? "directed" : "wrote", "the",
                                "work" + std::to_string(w)},
                               {2, 2, -1, 4, 2}, "s" + std::to_string(id++));
        s.spans = {linked_span(s, 1, 1, "P" + std::to_string(p)), linked_span(s, 4, 4, "W" + std::to_string(w))};
        sentences.push_back(s);
      }
    }
    DistantSupervisionConfig ds;
    ds.na_ratio = 0.5;
    bags = distant_supervision(sentences, kb, ds);
  }
};

}  // namespace

TEST_CASE("relation model learns a planted verb-to-relation mapping") {
  PlantedCorpus pc;
  auto split = split_dataset(pc.bags, {0.7, 0.1, 0.2}, 1);
  std::map<std::string, const Sentence*> by_id;
  for (const auto& s : pc.sentences) by_id[s.id] = &s;
  REConfig cfg;
  cfg.word_dim = 8;
  cfg.hidden = 8;
  cfg.epochs = 25;
  cfg.learning_rate = 5e-3;
  RelationModel model(cfg, Vocabularies::build(pc.sentences, pc.kb, nullptr), nullptr);
  auto train = prepare_bags(model, split.train, by_id, pc.kb);
  auto test = prepare_bags(model, split.test, by_id, pc.kb);
  ReTrainingTrace trace;
  auto trained = train_relation_model(train, {}, std::move(model), &trace);
  for (double l : trace.epoch_loss) CHECK(std::isfinite(l));
  CHECK(trace.epoch_loss.back() < trace.epoch_loss.front());
  auto m = evaluate_relation_model(trained, test);
  MESSAGE("planted test micro-F1 " << m.f1);
  CHECK(m.f1 >= 0.8);

  // Checkpoint round-trip reproduces predictions exactly.
  std::stringstream buf;
  trained.to_checkpoint().save(buf);
  auto restored = RelationModel::from_checkpoint(nn::Checkpoint::load(buf));
  for (const auto& b : test) CHECK(predict_bag(restored, b.instances).scores == predict_bag(trained, b.instances).scores);

  auto tmpl = pc.kb.build_fact_type_templates();
  auto ex = extract(pc.sentences, pc.kb, trained, tmpl);
  for (const auto& t : ex.accepted) CHECK(validate_triple(t.triple, pc.kb, tmpl) == Verdict::kAccept);
  for (const auto& r : ex.rejected) CHECK(r.reason != Verdict::kAccept);
  CHECK(extract({}, pc.kb, trained, tmpl).accepted.empty());
}

TEST_CASE("extract emits nothing for NA predictions and writes TSV") {
  PlantedCorpus pc;
  RelationModel model(tiny_config(), Vocabularies::build(pc.sentences, pc.kb, nullptr), nullptr);
  model.params().get("re.threshold").value(0, 0) = 1.0;  // nothing clears it
  auto ex = extract(pc.sentences, pc.kb, model, pc.kb.build_fact_type_templates());
  CHECK(ex.accepted.empty());
  CHECK(ex.rejected.empty());

  auto dir = std::filesystem::temp_directory_path() / "kbc_triples_test";
  std::filesystem::create_directories(dir);
  ExtractedTriple t{{"P1", "wrote", "W2"}, 0.75, {"s1", "s2"}};
  write_triples_tsv(dir / "t.tsv", {t});
  auto back = read_triples_tsv(dir / "t.tsv");
  REQUIRE(back.size() == 1);
  CHECK(back[0].triple == t.triple);
  CHECK(back[0].confidence == 0.75);
  CHECK(back[0].sentence_ids == t.sentence_ids);
  std::filesystem::remove_all(dir);
}

TEST_CASE("relation config validation") {
  REConfig c;
  c.hidden = 5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = REConfig{};
  c.margin = 1.5;
  CHECK_THROWS_AS(c.validate(), Error);
  c = REConfig{};
  c.na_weight = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}
