#include "kbc/data_generator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <set>
#include <tuple>

#include "json.hpp"
#include "kbc/text_util.hpp"

namespace kbc {

using json = nlohmann::json;

std::optional<Sentence> filter_linked(const Sentence& sentence, const Recognizer& recognizer,
                                      const KnowledgeBase& kb, const EmbeddingTable& table, int k,
                                      const SubgraphOptions& options) {
  std::vector<Candidate> candidates;
  for (auto& sp : recognizer.recognize(sentence)) {
    auto c = generate_candidates(sp, kb, table, k);
    if (!c.empty()) candidates.push_back(std::move(c));
  }
  if (candidates.size() < 2) return std::nullopt;
  auto decisions = subgraph_link(candidates, kb, options);
  Sentence out = sentence;
  out.spans.clear();
  for (auto& d : decisions) {
    if (!d) continue;
    Span sp = d->span;
    sp.entity = d->entity;
    sp.method = LinkMethod::kSubgraph;
    sp.type = kb.type_of(d->entity);
    out.spans.push_back(std::move(sp));
  }
  if (out.spans.size() < 2) return std::nullopt;
  return out;
}

BootstrapResult run_rounds(const RoundStep& step, int max_rounds) {
  if (max_rounds < 1) throw Error("bootstrap needs at least one round");
  BootstrapResult result;
  for (int r = 1; r <= max_rounds; ++r) {
    auto [kept, student] = step(r);
    int count = static_cast<int>(kept.size());
    if (!result.rounds.empty() && count < result.rounds.back().extracted_count) {
      result.rounds.push_back({r, count, nullptr});
      break;
    }
    result.rounds.push_back({r, count, student});
    result.corpus = std::move(kept);
    result.best_round = r;
    result.recognizer = student;
  }
  return result;
}

BootstrapResult bootstrap_linked_corpus(const std::vector<Sentence>& raw, const KnowledgeBase& kb,
                                        const EmbeddingTable& table, const BootstrapConfig& cfg) {
  if (raw.empty()) throw Error("bootstrap: empty corpus");

  auto train_student = [&](const std::vector<Sentence>& labeled, int round) {
    auto student = std::make_shared<TrainableSpanClassifier>(kb, cfg.classifier);
    try {
      student->train(labeled);
    } catch (const Error& e) {
      throw Error("bootstrap round " + std::to_string(round) + ": " + e.what());
    }
    return std::shared_ptr<const TrainableSpanClassifier>(student);
  };

  // Round 0: noisy gazetteer tags train the first recognizer.
  GazetteerRecognizer gazetteer(kb);
  std::vector<Sentence> noisy;
  for (const auto& s : raw) {
    Sentence t = s;
    t.spans = gazetteer.recognize(s);
    noisy.push_back(std::move(t));
  }
  std::shared_ptr<const TrainableSpanClassifier> current = train_student(noisy, 0);

  RoundStep step = [&](int round) {
    std::vector<Sentence> kept;
    for (const auto& s : raw) {
      if (auto linked = filter_linked(s, *current, kb, table, cfg.k, cfg.subgraph)) kept.push_back(std::move(*linked));
    }
    auto student = train_student(kept, round);
    current = student;
    return std::make_pair(std::move(kept), student);
  };
  return run_rounds(step, cfg.max_rounds);
}

void write_generation_report(std::ostream& out, const BootstrapResult& result) {
  json rounds = json::array();
  for (const auto& r : result.rounds) {
    rounds.push_back({{"round", r.round_index}, {"extracted", r.extracted_count}, {"kept", r.recognizer != nullptr}});
  }
  json report = {{"rounds", rounds}, {"best_round", result.best_round},
                 {"sentences", static_cast<int>(result.corpus.size())}};
  out << report.dump(2) << '\n';
}

// ---- distant supervision ----------------------------------------------------

namespace {

template <typename T>
std::vector<T> sample_keep_order(const std::vector<T>& items, std::size_t n, Rng& rng) {
  if (items.size() <= n) return items;
  std::vector<std::size_t> idx(items.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  std::vector<T> out;
  for (auto i : idx) out.push_back(items[i]);
  return out;
}

}  // namespace

std::vector<Bag> distant_supervision(const std::vector<Sentence>& linked, const KnowledgeBase& kb,
                                     const DistantSupervisionConfig& cfg) {
  if (cfg.max_bag_size < 1) throw Error("max_bag_size must be >= 1");
  if (cfg.na_ratio < 0) throw Error("na_ratio must be non-negative");
  std::map<std::pair<EntityId, EntityId>, std::vector<std::string>> pairs;
  for (const auto& s : linked) {
    std::set<EntityId> ents;
    for (const auto& sp : s.spans) {
      if (sp.entity && kb.has_entity(*sp.entity)) ents.insert(*sp.entity);
    }
    for (const auto& a : ents) {
      for (const auto& b : ents) {
        if (a != b) pairs[{a, b}].push_back(s.id);
      }
    }
  }
  Rng rng(derive_seed(cfg.seed, "distant-supervision"));
  std::vector<Bag> positive, na;
  for (auto& [key, ids] : pairs) {
    Bag bag;
    bag.subject = key.first;
    bag.object = key.second;
    bag.sentences = sample_keep_order(ids, static_cast<std::size_t>(cfg.max_bag_size), rng);
    auto labels = kb.relations_between(key.first, key.second);
    bag.labels.assign(labels.begin(), labels.end());
    (bag.is_na() ? na : positive).push_back(std::move(bag));
  }
  auto na_keep = static_cast<std::size_t>(std::floor(cfg.na_ratio * static_cast<double>(positive.size())));
  na = sample_keep_order(na, na_keep, rng);
  std::vector<Bag> out;
  std::merge(positive.begin(), positive.end(), na.begin(), na.end(), std::back_inserter(out),
             [](const Bag& x, const Bag& y) { return std::tie(x.subject, x.object) < std::tie(y.subject, y.object); });
  return out;
}

DatasetSplit split_dataset(const std::vector<Bag>& bags, std::array<double, 3> ratios, std::uint64_t seed) {
  for (double r : ratios) {
    if (r < 0) throw Error("split ratios must be non-negative");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw Error("split ratios must sum to 1");
  std::vector<std::size_t> idx(bags.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(derive_seed(seed, "split"));
  std::shuffle(idx.begin(), idx.end(), rng);
  auto n = static_cast<double>(bags.size());
  auto n_train = static_cast<std::size_t>(std::llround(ratios[0] * n));
  auto n_valid = std::min(bags.size() - n_train, static_cast<std::size_t>(std::llround(ratios[1] * n)));
  std::vector<std::size_t> parts[3] = {
      {idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_train)},
      {idx.begin() + static_cast<std::ptrdiff_t>(n_train), idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid)},
      {idx.begin() + static_cast<std::ptrdiff_t>(n_train + n_valid), idx.end()}};
  DatasetSplit out;
  std::vector<Bag>* dest[3] = {&out.train, &out.valid, &out.test};
  for (int p = 0; p < 3; ++p) {
    std::sort(parts[p].begin(), parts[p].end());
    for (auto i : parts[p]) dest[p]->push_back(bags[i]);
  }
  return out;
}

std::string bag_to_json_line(const Bag& bag) {
  json j = {{"subject", bag.subject}, {"object", bag.object}, {"labels", bag.labels}, {"sentences", bag.sentences}};
  return j.dump();
}

Bag bag_from_json_line(const std::string& line) {
  try {
    auto j = json::parse(line);
    Bag bag;
    bag.subject = j.at("subject").get<std::string>();
    bag.object = j.at("object").get<std::string>();
    bag.labels = j.at("labels").get<std::vector<std::string>>();
    bag.sentences = j.at("sentences").get<std::vector<std::string>>();
    if (bag.sentences.empty()) throw Error("bag has no sentences");
    return bag;
  } catch (const json::exception& e) {
    throw Error(std::string("bad bag line: ") + e.what());
  }
}

void write_bags(const std::filesystem::path& file, const std::vector<Bag>& bags) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write " + file.string());
  for (const auto& b : bags) out << bag_to_json_line(b) << '\n';
}

std::vector<Bag> read_bags(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw Error("cannot open " + file.string());
  std::vector<Bag> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    try {
      out.push_back(bag_from_json_line(line));
    } catch (const Error& e) {
      throw Error(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace kbc
