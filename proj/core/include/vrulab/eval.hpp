#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "vrulab/rotation_env.hpp"

namespace vrulab::eval {

enum class ExtractMode { Direct, Tagged };

enum class AnswerKind { Object, Unknown, Unparseable };

struct Answer {
  AnswerKind kind = AnswerKind::Unparseable;
  std::string text;  // lowercased; "unknown" for Unknown, empty if Unparseable

  static Answer from_text(std::string_view cleaned);
  bool matches(const env::Episode& gold) const {
    return kind != AnswerKind::Unparseable && text == gold.answer_text();
  }
  friend bool operator==(const Answer&, const Answer&) = default;
};

// Direct: first whitespace-delimited word. Tagged: text between the first
// "<ans>" and the next "</ans>". Both are lowercased and stripped of
// surrounding whitespace and punctuation.
Answer extract_answer(std::string_view raw, ExtractMode mode);

struct PredictionRecord {
  std::int64_t episode_id = 0;
  std::string raw_output;
  Answer extracted;
};

PredictionRecord make_prediction(std::int64_t id, std::string raw, ExtractMode mode);

struct BucketScore {
  int count = 0;
  int correct = 0;
  // correct / count; only meaningful when count > 0.
  double accuracy() const { return count > 0 ? static_cast<double>(correct) / count : 0.0; }
  friend bool operator==(const BucketScore&, const BucketScore&) = default;
};

struct EvalReport {
  std::map<int, BucketScore> per_bucket;  // keyed by n_steps
  // Unweighted mean of non-empty bucket accuracies; 0 when all are empty.
  double average() const;
  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

// Buckets are sized by the gold episodes; a gold episode with no prediction
// scores as incorrect. Unknown or duplicated prediction ids throw
// ValidationError listing them.
EvalReport accuracy(std::span<const PredictionRecord> preds,
                    std::span<const env::Episode> golds);

// "n_steps,count,correct,accuracy" with one row per bucket; empty buckets
// print "n/a".
std::string report_csv(const EvalReport& report);
EvalReport parse_report_csv(std::string_view csv);

// Aligned text table with columns 2-step..5-step (plus any other buckets
// present) and Avg., values in percent.
std::string report_table(const EvalReport& report);

// Predictions file: JSON Lines {"id": int, "raw": str}.
void write_predictions(std::ostream& out, std::span<const PredictionRecord> preds);
std::vector<PredictionRecord> read_predictions(std::istream& in, ExtractMode mode);

}  // namespace vrulab::eval
