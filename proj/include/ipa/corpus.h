#ifndef IPA_CORPUS_H_
#define IPA_CORPUS_H_

#include <array>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "ipa/interp.h"

namespace ipa::corpus {

enum class Split { kTrain, kValid, kTest };
const char* split_name(Split s);
std::optional<Split> parse_split(const std::string& name);

// Program families. Each has a hazardous and a safe form; the hazard is
// what the description (when informative) reveals.
enum class Family {
  kArithmetic,   // sqrt of a possibly negative value: ValueError
  kParse,        // int() of a word: ValueError
  kDivision,     // zero divisor: ZeroDivisionError
  kIndexing,     // index past the end: IndexError
  kGuardedLoop,  // loop bound longer than the list: IndexError
  kInputCount,   // more reads than input lines: EOFError
  kTypeMix,      // int + str: TypeError
  kUnbound,      // variable bound only on one branch: NameError
  kLoopParity,   // countdown by 2 from an odd start: Timeout
  kTryWrapper,   // risky statement inside try/except
};
inline constexpr int kNumFamilies = 10;
const char* family_name(Family f);
std::optional<Family> parse_family(const std::string& name);

// Relative weight per family, indexed by Family.
using TemplateMix = std::array<double, kNumFamilies>;
TemplateMix default_mix();
// Families whose errors span exactly five kinds: EOFError, ValueError,
// ZeroDivisionError, IndexError, NameError.
TemplateMix five_kind_mix();
std::string mix_to_string(const TemplateMix& mix);
TemplateMix parse_mix(const std::string& text);

struct Example {
  int id = 0;
  int problem_id = 0;
  Split split = Split::kTrain;
  std::string source;
  std::vector<std::string> stdin_lines;
  std::string description;
  int target = 0;  // 0 = no error, 1 + ErrorKind otherwise
  std::optional<int> error_line;
};

struct CorpusOptions {
  std::uint64_t seed = 0;
  int size = 2000;
  TemplateMix mix = default_mix();
  int submissions_per_problem = 4;
  double uninformative_fraction = 0.2;
  double hazard_fraction = 0.5;
  // Probability that a hazardous problem's stdin actually triggers it.
  double trigger_rate = 0.9;
  // Probability that a submission to a hazardous problem guards against it.
  double careful_rate = 0.3;
  // Minimum train count per error kind reachable under `mix`; negative
  // means min(20, size / 100).
  int min_per_kind = -1;
  int max_attempts = 8;
};

struct Manifest {
  std::uint64_t seed = 0;
  std::vector<Example> examples;
  // [split][class]
  std::array<std::array<int, interp::kNumClasses>, 3> class_counts() const;
  std::vector<const Example*> split(Split s) const;
};

class GenerationExhausted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class EmptyStratum : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// One submission: program text, stdin and description, unlabeled.
struct Instance {
  std::string source;
  std::vector<std::string> stdin_lines;
  std::string description;
};

using Rng = std::mt19937_64;

// The shared description of a problem.
struct ProblemSpec {
  Family family = Family::kArithmetic;
  bool hazard = false;
  bool informative = true;
  int param = 0;  // family-specific size (input count, list length, ...)
  // Pipelines apply the risky operation to two inputs; `slot` is the one
  // that may fault.
  bool pipeline = false;
  int slot = 0;
};

ProblemSpec draw_problem(Family family, const CorpusOptions& options, Rng& rng);
Instance make_instance(const ProblemSpec& spec, const CorpusOptions& options, Rng& rng);
std::string describe(const ProblemSpec& spec);

// Runs Interpreter B and fills target / error_line.
void label(Example& example);

Manifest generate_corpus(const CorpusOptions& options);

// Line-delimited JSON, one record per example.
std::string to_jsonl(const Manifest& manifest);
Manifest from_jsonl(const std::string& text);
void save_manifest(const Manifest& manifest, const std::string& path);
Manifest load_manifest(const std::string& path);

// Each draw flips a fair coin between the no-error and error strata of the
// split, then picks uniformly (with replacement) within the stratum.
class BalancedSampler {
 public:
  BalancedSampler(const Manifest& manifest, Split split, std::uint64_t seed);
  std::vector<const Example*> next_batch(int batch_size = 32);

 private:
  std::vector<const Example*> clean_;
  std::vector<const Example*> faulty_;
  Rng rng_;
};

}  // namespace ipa::corpus

#endif  // IPA_CORPUS_H_
