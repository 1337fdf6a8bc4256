#pragma once

#include <string>
#include <vector>

#include "dawgen/rng.hpp"
#include "dawgen/vocab.hpp"

namespace dawgen {

/// A labeled sentence pair; token ids refer to the toy vocabulary.
struct Example {
  std::vector<int> s1;
  std::vector<int> s2;
  int label = 0;
};

/// Planted sentence-pair task definition: class count, verbalizer tokens,
/// and the hard templates for classification and per-class conditional
/// generation.
struct TaskSpec {
  std::string name;
  int num_classes = 2;
  std::vector<std::string> verbalizers;  // class id -> verbalizer token

  // classification template: cls_prefix S1 cls_mid S2 cls_suffix <mask>
  std::vector<std::string> cls_prefix, cls_mid, cls_suffix;
  // conditional template per class: cond_prefix[l] S1 cond_cue, generation follows
  std::vector<std::vector<std::string>> cond_prefix;
  std::vector<std::string> cond_cue;

  /// "toy-paraphrase" or "toy-nli"; throws on anything else.
  static TaskSpec named(const std::string& name);
};

struct SplitSet {
  std::vector<Example> train_pool;
  std::vector<Example> dev;
  std::vector<Example> test;
  std::uint64_t seed = 0;
};

/// Ground-truth referee. Applies the planted rules; total on any pair.
int oracle_label(const std::vector<int>& s1, const std::vector<int>& s2,
                 const TaskSpec& spec, const Vocabulary& vocab);

/// Samples one sentence from the toy grammar (1-2 clauses, no internal
/// antonym pairs).
std::vector<int> sample_s1(const Vocabulary& vocab, Rng& rng);

/// Builds disjoint train-pool / dev / test splits with balanced classes.
/// Every emitted example is re-checked against oracle_label.
SplitSet build_task(const TaskSpec& spec, std::uint64_t seed,
                    int test_per_class = 500, int dev_per_class = 16,
                    int pool_per_class = 200);

/// Few-shot sampling without replacement, balanced per class.
std::vector<Example> sample_few_shot(const std::vector<Example>& pool,
                                     int shots_per_class, int num_classes,
                                     std::uint64_t seed);

/// Classification render: template tokens around S1/S2, <mask> last.
std::vector<int> render_classification(const Example& ex, const TaskSpec& spec,
                                       const Vocabulary& vocab, int max_len = 128);

/// Conditional render for class `label`: context ends where S2 begins.
std::vector<int> render_conditional(int label, const std::vector<int>& s1,
                                    const TaskSpec& spec, const Vocabulary& vocab,
                                    int max_len = 128);

/// Verbalizer token ids in class order.
std::vector<int> verbalizer_ids(const TaskSpec& spec, const Vocabulary& vocab);

/// Mixed pretraining corpus over the toy grammar: plain sentences,
/// label-conditional pair renders, and classification renders with answers.
std::vector<std::vector<int>> make_pretrain_corpus(const TaskSpec& spec,
                                                   const Vocabulary& vocab,
                                                   int count, std::uint64_t seed);

}  // namespace dawgen
