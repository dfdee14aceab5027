#include "dualpath/tasks.hpp"

#include <cmath>

namespace dualpath::tasks {

using signalio::kSegClasses;
using signalio::kWindowLen;

const char* task_name(TaskKind t) {
    switch (t) {
        case TaskKind::subject_id: return "subject_id";
        case TaskKind::bmi: return "bmi";
        case TaskKind::sex: return "sex";
        case TaskKind::age: return "age";
        case TaskKind::segmentation: return "segmentation";
        case TaskKind::bp: return "bp";
    }
    return "?";
}

TaskKind task_from_name(const std::string& s) {
    if (s == "subject_id") return TaskKind::subject_id;
    if (s == "bmi") return TaskKind::bmi;
    if (s == "sex") return TaskKind::sex;
    if (s == "age") return TaskKind::age;
    if (s == "segmentation") return TaskKind::segmentation;
    if (s == "bp") return TaskKind::bp;
    throw ConfigError("unknown task: " + s);
}

int task_classes(TaskKind t) {
    switch (t) {
        case TaskKind::subject_id: return 30;
        case TaskKind::bmi: return 3;
        case TaskKind::sex: return 2;
        case TaskKind::age: return 3;
        default: return 0;
    }
}

bool task_is_classification(TaskKind t) { return task_classes(t) > 0; }

nn::HeadKind task_head_kind(TaskKind t) {
    switch (t) {
        case TaskKind::segmentation: return nn::HeadKind::segmenter;
        case TaskKind::bp: return nn::HeadKind::regressor;
        default: return nn::HeadKind::classifier;
    }
}

int task_out_channels(TaskKind t) {
    if (t == TaskKind::segmentation) return kSegClasses;
    if (t == TaskKind::bp) return 1;
    return task_classes(t);
}

void TaskPrediction::validate() const {
    if (!all_finite(value.v)) throw InputError("task prediction: non-finite values");
    switch (kind) {
        case nn::HeadKind::classifier:
            if (value.l != 1) throw InputError("classifier prediction must be (n,K,1)");
            break;
        case nn::HeadKind::segmenter:
            if (value.c != kSegClasses || value.l != kWindowLen)
                throw InputError("segmenter prediction must be (n,6,2048)");
            break;
        case nn::HeadKind::regressor:
            if (value.c != 1 || value.l != kWindowLen)
                throw InputError("regressor prediction must be (n,1,2048)");
            break;
        case nn::HeadKind::ecg_decoder:
            if (value.c != 1 || value.l != kWindowLen)
                throw InputError("decoder prediction must be (n,1,2048)");
            break;
    }
}

std::vector<double> TaskLabels::one_hot(int k, int n) {
    if (k < 0 || k >= n) throw InputError("one_hot: class index out of range");
    std::vector<double> v(static_cast<std::size_t>(n), 0.0);
    v[static_cast<std::size_t>(k)] = 1.0;
    return v;
}

int TaskLabels::class_of(TaskKind t) const {
    switch (t) {
        case TaskKind::subject_id: return subject_id;
        case TaskKind::bmi: return bmi_class;
        case TaskKind::sex: return sex;
        case TaskKind::age: return age_class;
        default: throw InputError("class_of: not a classification task");
    }
}

TaskLabels labels_of(const signalio::PairedSample& w) {
    TaskLabels l;
    l.subject_id = w.subject_id;
    l.bmi_class = w.bmi_class;
    l.sex = w.sex;
    l.age_class = w.age_class;
    l.seg_mask = w.seg_mask.data();
    l.bp = w.bp.data();
    return l;
}

int bmi_class(double bmi) {
    if (!(bmi > 0.0)) throw InputError("bmi_class: bmi must be positive");
    if (bmi < 18.5) return 0;
    if (bmi <= 24.9) return 1;
    return 2;
}

int age_class(double age) {
    if (!(age > 0.0)) throw InputError("age_class: age must be positive");
    if (age < 24.0) return 0;
    if (age <= 30.0) return 1;
    return 2;
}

// ---------------------------------------------------------------------------
// IoU
// ---------------------------------------------------------------------------
void IoUAccumulator::add(const std::uint8_t* pred, const std::uint8_t* truth) {
    for (int c = 0; c < kSegClasses; ++c) {
        const std::uint8_t* p = pred + static_cast<std::size_t>(c) * kWindowLen;
        const std::uint8_t* t = truth + static_cast<std::size_t>(c) * kWindowLen;
        std::uint64_t inter = 0, uni = 0;
        for (int i = 0; i < kWindowLen; ++i) {
            const bool a = p[i] != 0;
            const bool b = t[i] != 0;
            inter += (a && b) ? 1 : 0;
            uni += (a || b) ? 1 : 0;
        }
        inter_[static_cast<std::size_t>(c)] += inter;
        uni_[static_cast<std::size_t>(c)] += uni;
    }
}

void IoUAccumulator::add_logits(const Tensor& logits, const std::uint8_t* truth, int window_index) {
    // sigmoid(z) >= 0.5  <=>  z >= 0
    std::vector<std::uint8_t> pred(static_cast<std::size_t>(kSegClasses) * kWindowLen);
    for (int c = 0; c < kSegClasses; ++c) {
        const double* row = logits.row(window_index, c);
        for (int t = 0; t < kWindowLen; ++t)
            pred[static_cast<std::size_t>(c) * kWindowLen + t] = row[t] >= 0.0 ? 1 : 0;
    }
    add(pred.data(), truth);
}

IoUResult IoUAccumulator::result() const {
    IoUResult r;
    double sum = 0.0;
    for (int c = 0; c < kSegClasses; ++c) {
        const std::size_t ci = static_cast<std::size_t>(c);
        r.per_class[ci] = uni_[ci] == 0 ? 1.0
                                        : static_cast<double>(inter_[ci]) / static_cast<double>(uni_[ci]);
        sum += r.per_class[ci];
    }
    r.mean = sum / kSegClasses;
    return r;
}

IoUResult iou(const std::vector<const std::uint8_t*>& pred, const std::vector<const std::uint8_t*>& truth) {
    if (pred.size() != truth.size()) throw InputError("iou: batch sizes differ");
    IoUAccumulator acc;
    for (std::size_t i = 0; i < pred.size(); ++i) acc.add(pred[i], truth[i]);
    return acc.result();
}

// ---------------------------------------------------------------------------
// accuracy / MAE
// ---------------------------------------------------------------------------
double accuracy(const Tensor& logits, const std::vector<int>& labels) {
    if (static_cast<std::size_t>(logits.n) != labels.size()) throw InputError("accuracy: batch mismatch");
    if (logits.n == 0) throw InputError("accuracy: empty batch");
    int correct = 0;
    for (int i = 0; i < logits.n; ++i) {
        int best = 0;
        for (int k = 1; k < logits.c; ++k)
            if (logits.at(i, k, 0) > logits.at(i, best, 0)) best = k;  // ties keep the lowest index
        if (best == labels[static_cast<std::size_t>(i)]) ++correct;
    }
    return static_cast<double>(correct) / logits.n;
}

double mae_normalized(const Tensor& pred, const Tensor& truth) {
    if (!pred.same_shape(truth) || pred.n == 0) throw InputError("mae: shape mismatch or empty");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) acc += std::fabs(pred.v[i] - truth.v[i]);
    return acc / static_cast<double>(pred.size());
}

double mae_mmhg(const Tensor& pred, const Tensor& truth, const std::vector<float>& bp_std) {
    if (!pred.same_shape(truth) || pred.n == 0) throw InputError("mae: shape mismatch or empty");
    if (static_cast<std::size_t>(pred.n) != bp_std.size()) throw InputError("mae: std count mismatch");
    const std::size_t item = static_cast<std::size_t>(pred.c) * pred.l;
    double acc = 0.0;
    for (int i = 0; i < pred.n; ++i) {
        const double* p = pred.v.data() + i * item;
        const double* t = truth.v.data() + i * item;
        double s = 0.0;
        for (std::size_t j = 0; j < item; ++j) s += std::fabs(p[j] - t[j]);
        acc += s * static_cast<double>(bp_std[static_cast<std::size_t>(i)]);
    }
    return acc / static_cast<double>(pred.size());
}

// ---------------------------------------------------------------------------
// training losses
// ---------------------------------------------------------------------------
double softmax_xent(const Tensor& logits, const std::vector<int>& labels, Tensor* grad) {
    if (static_cast<std::size_t>(logits.n) != labels.size() || logits.n == 0)
        throw InputError("softmax_xent: batch mismatch");
    const int K = logits.c;
    if (grad) *grad = Tensor(logits.n, K, 1);
    double loss = 0.0;
    for (int i = 0; i < logits.n; ++i) {
        const int y = labels[static_cast<std::size_t>(i)];
        if (y < 0 || y >= K) throw InputError("softmax_xent: label out of range");
        double mx = logits.at(i, 0, 0);
        for (int k = 1; k < K; ++k) mx = std::max(mx, logits.at(i, k, 0));
        double z = 0.0;
        for (int k = 0; k < K; ++k) z += std::exp(logits.at(i, k, 0) - mx);
        loss += -(logits.at(i, y, 0) - mx) + std::log(z);
        if (grad)
            for (int k = 0; k < K; ++k) {
                const double p = std::exp(logits.at(i, k, 0) - mx) / z;
                grad->at(i, k, 0) = (p - (k == y ? 1.0 : 0.0)) / logits.n;
            }
    }
    return loss / logits.n;
}

double bce_with_logits(const Tensor& logits, const std::vector<const std::uint8_t*>& targets, Tensor* grad) {
    if (static_cast<std::size_t>(logits.n) != targets.size() || logits.n == 0)
        throw InputError("bce_with_logits: batch mismatch");
    const std::size_t item = static_cast<std::size_t>(logits.c) * logits.l;
    if (grad) *grad = Tensor(logits.n, logits.c, logits.l);
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(logits.size());
    for (int i = 0; i < logits.n; ++i) {
        const double* z = logits.v.data() + i * item;
        const std::uint8_t* t = targets[static_cast<std::size_t>(i)];
        double s = 0.0;
        for (std::size_t j = 0; j < item; ++j) {
            const double y = t[j] ? 1.0 : 0.0;
            // stable log(1+exp(-|z|)) formulation
            const double zj = z[j];
            s += std::max(zj, 0.0) - zj * y + std::log1p(std::exp(-std::fabs(zj)));
            if (grad) {
                const double sig = 1.0 / (1.0 + std::exp(-zj));
                grad->v[i * item + j] = (sig - y) * inv;
            }
        }
        loss += s;
    }
    return loss * inv;
}

double mse_mean(const Tensor& pred, const Tensor& target, Tensor* grad) {
    if (!pred.same_shape(target) || pred.n == 0) throw InputError("mse_mean: shape mismatch");
    const double inv = 1.0 / static_cast<double>(pred.size());
    if (grad) *grad = Tensor(pred.n, pred.c, pred.l);
    double loss = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.v[i] - target.v[i];
        loss += d * d;
        if (grad) grad->v[i] = 2.0 * d * inv;
    }
    return loss * inv;
}

}  // namespace dualpath::tasks
