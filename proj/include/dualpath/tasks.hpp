// Downstream task label construction, training losses and evaluation
// metrics: segmentation IoU, classification accuracy, BP regression MAE.
#pragma once

#include "dualpath/common.hpp"
#include "dualpath/netblocks.hpp"
#include "dualpath/signalio.hpp"
#include "dualpath/tensor.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace dualpath::tasks {

enum class TaskKind { subject_id, bmi, sex, age, segmentation, bp };
const char* task_name(TaskKind t);
TaskKind task_from_name(const std::string& s);
// classification class count; 30-way subject IDs regardless of how many
// subjects a given corpus holds
int task_classes(TaskKind t);
bool task_is_classification(TaskKind t);
nn::HeadKind task_head_kind(TaskKind t);
// label channels for dense heads (segmentation 6, bp 1)
int task_out_channels(TaskKind t);

// kind-tagged prediction; shape must match the head kind
struct TaskPrediction {
    nn::HeadKind kind = nn::HeadKind::classifier;
    Tensor value;  // classifier (n,K,1), segmenter (n,6,2048), regressor (n,1,2048)
    void validate() const;
};

struct TaskLabels {
    int subject_id = 0;
    int bmi_class = 0;
    int sex = 0;
    int age_class = 0;
    const std::uint8_t* seg_mask = nullptr;  // 6 x 2048
    const float* bp = nullptr;               // 2048, z-scored
    static std::vector<double> one_hot(int k, int n);

    int class_of(TaskKind t) const;
};

TaskLabels labels_of(const signalio::PairedSample& w);

// ---- label construction (thresholds: 18.5/24.9 for BMI, 24/30 for age,
// middle class inclusive on both ends) ----
int bmi_class(double bmi);
int age_class(double age);

// ---- metrics ----
struct IoUResult {
    std::array<double, signalio::kSegClasses> per_class{};
    double mean = 0.0;
};

// micro aggregation over an evaluation set; a class empty in both pred and
// truth everywhere scores 1
class IoUAccumulator {
public:
    void add(const std::uint8_t* pred, const std::uint8_t* truth);  // 6 x 2048 each
    void add_logits(const Tensor& logits, const std::uint8_t* truth_batch_base, int window_index);
    IoUResult result() const;

private:
    std::array<std::uint64_t, signalio::kSegClasses> inter_{};
    std::array<std::uint64_t, signalio::kSegClasses> uni_{};
};

IoUResult iou(const std::vector<const std::uint8_t*>& pred, const std::vector<const std::uint8_t*>& truth);

// fraction of argmax matches; ties broken toward the lowest index
double accuracy(const Tensor& logits, const std::vector<int>& labels);

// mean absolute error in the original BP units: |pred-true| in z-units
// scaled by the stored per-record std, averaged over all timesteps/windows
double mae_mmhg(const Tensor& pred, const Tensor& truth, const std::vector<float>& bp_std);
double mae_normalized(const Tensor& pred, const Tensor& truth);

// ---- training losses (mean over batch and elements) ----
double softmax_xent(const Tensor& logits, const std::vector<int>& labels, Tensor* grad);
double bce_with_logits(const Tensor& logits, const std::vector<const std::uint8_t*>& targets, Tensor* grad);
double mse_mean(const Tensor& pred, const Tensor& target, Tensor* grad);

}  // namespace dualpath::tasks
