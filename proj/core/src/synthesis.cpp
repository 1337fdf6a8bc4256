#include "dawgen/synthesis.hpp"

#include <fstream>

#include <json.hpp>

#include "dawgen/dataset_io.hpp"
#include "dawgen/error.hpp"

namespace dawgen {

SyntheticDataset synthesize_dataset(const Model& m,
                                    const std::vector<Tensor>& prompts,
                                    const TaskSpec& spec, const Vocabulary& vocab,
                                    int per_class, const DecodeConfig& cfg,
                                    std::uint64_t seed) {
  if (per_class < 0) throw Error("synthesize_dataset: negative per_class");
  if (static_cast<int>(prompts.size()) != spec.num_classes)
    throw Error("synthesize_dataset: need one tuned prompt per class");

  SyntheticDataset ds;
  ds.decode = cfg;
  ds.seed = seed;
  if (per_class == 0) return ds;

  constexpr int kMaxRedraws = 50;
  int agree = 0;
  for (int l = 0; l < spec.num_classes; ++l) {
    std::uint64_t stream_seed = derive_seed(seed, "synthesis", l);
    Rng rng(stream_seed);
    int kept = 0;
    int empties = 0;
    while (kept < per_class) {
      std::vector<int> s1 = sample_s1(vocab, rng);
      std::vector<int> ctx = render_conditional(l, s1, spec, vocab);
      std::vector<int> s2 =
          generate_sequence(m, prompts[l], ctx, cfg, vocab.eos_id(), rng);
      if (s2.empty()) {
        if (++empties > kMaxRedraws + per_class)
          throw Error("synthesize_dataset: class " + std::to_string(l) +
                      " produces only empty continuations");
        continue;
      }
      Example ex;
      ex.s1 = s1;
      ex.s2 = s2;
      ex.label = l;
      if (oracle_label(s1, s2, spec, vocab) == l) ++agree;
      ds.examples.push_back(std::move(ex));
      ds.provenance.push_back({l, stream_seed});
      ++kept;
    }
  }
  ds.oracle_agreement =
      static_cast<double>(agree) / static_cast<double>(ds.examples.size());
  return ds;
}

void write_synthetic_dataset(const SyntheticDataset& ds, const TaskSpec& spec,
                             const Vocabulary& vocab, const std::string& path) {
  write_examples_jsonl(path, ds.examples, spec, vocab);

  nlohmann::ordered_json meta;
  meta["decode"] = {
      {"strategy", ds.decode.strategy == DecodeStrategy::TopK ? "top_k" : "nucleus"},
      {"k", ds.decode.k},
      {"p", ds.decode.p},
      {"temperature", ds.decode.temperature},
      {"max_len", ds.decode.max_len}};
  meta["seed"] = ds.seed;
  if (ds.oracle_agreement)
    meta["oracle_agreement"] = *ds.oracle_agreement;
  else
    meta["oracle_agreement"] = nullptr;
  std::vector<int> counts(spec.num_classes, 0);
  for (const Example& ex : ds.examples) ++counts[ex.label];
  meta["per_class_counts"] = counts;
  meta["num_examples"] = ds.examples.size();

  std::string meta_path = path + ".meta.json";
  std::ofstream out(meta_path);
  if (!out) throw Error("cannot open " + meta_path);
  out << meta.dump(2) << "\n";
}

}  // namespace dawgen
