#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "spencer/data.hpp"
#include "spencer/encoder.hpp"
#include "spencer/graph.hpp"
#include "spencer/train.hpp"

namespace spencer {

enum class DistillVariant { kBase, kContrastive };

struct ValMetric {
  enum Kind { kMrr, kRecallAtK } kind = kMrr;
  size_t k = 5;  // used by kRecallAtK
};

struct DistillConfig {
  size_t layer_drop = 3;        // blocks removed per compression step
  double drop_threshold = 0.01; // tolerated score drop vs the teacher
  size_t min_layers = 1;
  size_t epochs = 3;
  double learning_rate = 1e-5;
  uint64_t seed = 42;
  DistillVariant variant = DistillVariant::kBase;
  ValMetric metric;
  double temperature = 0.05;
  LossForm loss_form = LossForm::kExclusive;
  size_t batch_size = 16;
  double weight_decay = 0.01;
  size_t max_len = 512;
  size_t val_pool_size = 100;
  // Term weights; 1:1 between the two alignment terms by default.
  double query_align_weight = 1.0;
  double pair_align_weight = 1.0;
  double contrastive_weight = 1.0;  // only used by kContrastive
};

// Alignment of student query vectors to the teacher's: sum of
// (1 - cos(student_i, teacher_i)). Zero exactly when the vectors coincide.
Graph::Id loss_distill_query_node(Graph& g,
                                  std::span<const Graph::Id> teacher_rows,
                                  std::span<const Graph::Id> student_rows);
double loss_distill_query(const std::vector<Tensor>& teacher,
                          const std::vector<Tensor>& student);

// Preservation of each pair's code/query geometry: sum of
// |cos(code_i, teacher_i) - cos(student_i, code_i)|.
Graph::Id loss_distill_dual_node(Graph& g,
                                 std::span<const Graph::Id> code_rows,
                                 std::span<const Graph::Id> teacher_rows,
                                 std::span<const Graph::Id> student_rows);
double loss_distill_dual(const std::vector<Tensor>& codes,
                         const std::vector<Tensor>& teacher,
                         const std::vector<Tensor>& student);

// Weighted sum of the two alignment terms (1:1 by default). Consumes no
// ground-truth labels.
Graph::Id loss_distill_total_node(Graph& g,
                                  std::span<const Graph::Id> code_rows,
                                  std::span<const Graph::Id> teacher_rows,
                                  std::span<const Graph::Id> student_rows,
                                  double query_align_weight = 1.0,
                                  double pair_align_weight = 1.0);
double loss_distill_total(const std::vector<Tensor>& codes,
                          const std::vector<Tensor>& teacher,
                          const std::vector<Tensor>& student);

struct DistillResult {
  EncoderModel student;
  History history;
};

// Trains the student to mimic the frozen source query encoder, with the
// frozen code encoder providing the pair-geometry reference. The contrastive
// variant adds the student-side query and cross modality contrastive terms.
DistillResult distill(const EncoderModel& source_query,
                      const EncoderModel& code_encoder,
                      EncoderModel student_init, const Corpus& train_data,
                      const DistillConfig& cfg);

struct SelectionTrace {
  double teacher_score = 0.0;
  struct Record {
    size_t a1_layers = 0;
    size_t a2_layers = 0;
    std::optional<double> score_a1;  // absent on the initial distillation
    std::optional<double> score_a2;
    std::string branch;  // "init", "keep-a1" or "advance"
    double score_s = 0.0;
  };
  std::vector<Record> records;
  struct Final {
    size_t layers = 0;
    double score = 0.0;
    bool threshold_violated = false;
  } final;
  std::vector<std::string> notes;

  std::vector<size_t> visited_sizes() const;
  std::string to_json() const;
};

struct SelectionHooks {
  // Distills a student of init's size from `source`.
  std::function<EncoderModel(const EncoderModel& source,
                             const EncoderModel& init, uint64_t seed)>
      distill_fn;
  // Pooled validation score of a candidate query encoder.
  std::function<double(const EncoderModel& query_encoder)> validate_fn;
};

struct SelectionResult {
  EncoderModel student;
  SelectionTrace trace;
};

// Iterative assistant selection: keep shrinking by layer_drop while the
// drop against the teacher score stays below the threshold, each round
// training one candidate from the current assistant pair's upper member and
// one from the lower, and keeping the better. Injected hooks drive the
// training and scoring.
SelectionResult select_teaching_assistant_with(const EncoderModel& teacher,
                                               const DistillConfig& cfg,
                                               const SelectionHooks& hooks);

// Production wiring: real distillation runs on the training split and
// validation scores from recall-only pooled evaluation.
SelectionResult select_teaching_assistant(const EncoderModel& teacher,
                                          const EncoderModel& code_encoder,
                                          const Corpus& train_data,
                                          const Corpus& valid_data,
                                          const DistillConfig& cfg);

}  // namespace spencer
