// Differentiable computation blocks: heart-sound encoder, multi-scale fusion
// bottleneck, ECG decoder, feature discriminator and downstream heads, all
// described by a BlockGraph shape contract.
//
// Layers keep their forward caches and implement explicit backward passes
// that accumulate parameter gradients; modules compose layers into the
// encode/fuse/decode and discriminator graphs.
#pragma once

#include "dualpath/common.hpp"
#include "dualpath/kernels.hpp"
#include "dualpath/tensor.hpp"

#include <array>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace dualpath::nn {

// ---------------------------------------------------------------------------
// Graph configuration
// ---------------------------------------------------------------------------
enum class HeadKind { classifier, segmenter, regressor, ecg_decoder };

const char* head_kind_name(HeadKind k);
HeadKind head_kind_from_name(const std::string& s);

struct BlockGraph {
    // channel_scale = 1 / scale_den, scale_den in {1,2,4,8,16,32}
    int scale_den = 1;
    std::vector<int> base_widths = {16, 32, 64};                  // encoder stages at scale 1
    std::vector<int> disc_base_widths = {32, 32, 64, 64, 64, 64}; // discriminator stages
    int encoder_stages = 3;
    int discriminator_depth = 6;
    int kernel = 7;
    // perceptual features: last discriminator stage only, or summed over all stages
    bool perceptual_multilayer = false;

    double channel_scale() const { return 1.0 / scale_den; }
    // stage width = max(1, floor(base_width * channel_scale))
    int width(int stage) const;
    int disc_width(int stage) const;
    int bottleneck_channels() const { return width(encoder_stages - 1); }

    void validate() const;
    std::string to_json() const;
    static BlockGraph from_json(const std::string& text);
};

// parse "1", "1/8", "0.125" into a scale denominator
int parse_channel_scale(const std::string& text);

// ---------------------------------------------------------------------------
// Parameters
// ---------------------------------------------------------------------------
struct Param {
    std::vector<int> shape;
    std::vector<double> w, g;
    bool trainable = true;

    void resize(std::vector<int> s);
    std::size_t size() const { return w.size(); }
    void zero_grad() { std::fill(g.begin(), g.end(), 0.0); }
};

struct NamedParams {
    std::vector<std::pair<std::string, Param*>> items;
    void add(const std::string& name, Param* p) { items.emplace_back(name, p); }
    Param* find(const std::string& name) const;
};

// FNV-1a over the float32 little-endian bytes of all parameters whose full
// name starts with `prefix`, visited in name-sorted order.
std::uint64_t params_hash(const NamedParams& np, const std::string& prefix = "");
std::size_t params_count(const NamedParams& np, const std::string& prefix = "");
void set_trainable(NamedParams& np, const std::string& prefix, bool trainable);

// ---------------------------------------------------------------------------
// Layers
// ---------------------------------------------------------------------------
class Conv1d {
public:
    Conv1d() = default;
    Conv1d(int in_c, int out_c, int k, int stride, int pad);
    void init(Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy, bool need_dx = true);
    void collect(const std::string& prefix, NamedParams& out);
    int out_len(int li) const { return kernels::conv_out_len(li, k_, stride_, pad_); }
    int out_c() const { return out_c_; }

private:
    int in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    Param w_, b_;
    Tensor x_;
};

class ConvT1d {
public:
    ConvT1d() = default;
    ConvT1d(int in_c, int out_c, int k, int stride, int pad);
    void init(Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy, bool need_dx = true);
    void collect(const std::string& prefix, NamedParams& out);
    int out_len(int li) const { return kernels::convt_out_len(li, k_, stride_, pad_); }

private:
    int in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 1, pad_ = 0;
    Param w_, b_;
    Tensor x_;
};

class InstanceNorm {
public:
    InstanceNorm() = default;
    explicit InstanceNorm(int channels, double eps = 1e-5);
    void init();
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
    void collect(const std::string& prefix, NamedParams& out);

private:
    int c_ = 0;
    double eps_ = 1e-5;
    Param gamma_, beta_;
    Tensor xhat_;
    std::vector<double> istd_;
};

class Linear {
public:
    Linear() = default;
    Linear(int in_d, int out_d);
    void init(Rng& rng);
    Tensor forward(const Tensor& x);  // x (n, in_d, 1) -> (n, out_d, 1)
    Tensor backward(const Tensor& dy, bool need_dx = true);
    void collect(const std::string& prefix, NamedParams& out);

private:
    int in_d_ = 0, out_d_ = 0;
    Param w_, b_;
    Tensor x_;
};

// ---------------------------------------------------------------------------
// Residual blocks (pre-activation)
// ---------------------------------------------------------------------------
class ResBlock {
public:
    ResBlock() = default;
    ResBlock(int in_c, int out_c, int stride, int kernel);
    void init(Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy, bool need_dx = true);
    void collect(const std::string& prefix, NamedParams& out);
    int out_len(int li) const { return conv1_.out_len(li); }

private:
    InstanceNorm n1_, n2_;
    Conv1d conv1_, conv2_;
    bool has_proj_ = false;
    Conv1d proj_;
    Tensor a1_, a2_;  // pre-relu activations for relu backward
    Tensor x_in_;
};

// Upsampling-by-2 residual block; shortcut is nearest-neighbor upsample
// followed by a pointwise projection when channels change.
class ResBlockUp {
public:
    ResBlockUp() = default;
    ResBlockUp(int in_c, int out_c, int kernel);
    void init(Rng& rng);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy, bool need_dx = true);
    void collect(const std::string& prefix, NamedParams& out);

private:
    InstanceNorm n1_, n2_;
    ConvT1d up_;
    Conv1d conv2_;
    bool has_proj_ = false;
    Conv1d proj_;
    int in_c_ = 0, out_c_ = 0;
    Tensor a1_, a2_, x_in_;
};

// ---------------------------------------------------------------------------
// Modules
// ---------------------------------------------------------------------------

// First three residual stages of a 1D ResNet; emits one feature map per
// stage at strictly decreasing temporal resolution.
class Encoder {
public:
    Encoder() = default;
    explicit Encoder(const BlockGraph& g);
    void init(Rng& rng);
    std::array<Tensor, 3> forward(const Tensor& x);
    Tensor backward(const std::array<Tensor, 3>& dtaps, bool need_dx = false);
    void collect(const std::string& prefix, NamedParams& out);

private:
    Conv1d stem_;
    ResBlock s1_, s2_, s3_;
};

// Aligns shallow maps to the deepest temporal resolution with strided
// convolutions, concatenates, condenses with a pointwise convolution and
// passes the result through a fourth residual block.
class Fusion {
public:
    Fusion() = default;
    explicit Fusion(const BlockGraph& g);
    void init(Rng& rng);
    Tensor forward(const std::array<Tensor, 3>& taps);
    std::array<Tensor, 3> backward(const Tensor& dphi);
    void collect(const std::string& prefix, NamedParams& out);

    // diagnostic: forward with the shallow branches zeroed (deepest map only)
    Tensor forward_deepest_only(const std::array<Tensor, 3>& taps);

private:
    Conv1d a1a_, a1b_, a2_;
    Conv1d pw_;
    ResBlock rb4_;
    int c1_ = 0, c2_ = 0, c3_ = 0;
};

// Mirror decoder: three upsampling residual stages plus an output projection.
class Decoder {
public:
    Decoder() = default;
    Decoder(const BlockGraph& g, int out_channels);
    void init(Rng& rng);
    Tensor forward(const Tensor& phi);
    Tensor backward(const Tensor& dy);
    void collect(const std::string& prefix, NamedParams& out);

private:
    ResBlockUp u1_, u2_, u3_;
    Conv1d head_;
};

// Deep residual 1D feature extractor; every stage halves the temporal
// resolution. Used as the perceptual feature discriminator.
class Net1D {
public:
    Net1D() = default;
    explicit Net1D(const BlockGraph& g);
    void init(Rng& rng);
    // returns the final-stage feature map; optionally exposes all stage taps
    Tensor forward(const Tensor& x, std::vector<Tensor>* taps = nullptr);
    Tensor backward(const Tensor& dfinal, bool need_dx);
    // gradient injection at every stage tap (empty tensors are skipped)
    Tensor backward_taps(const std::vector<Tensor>& dtaps, bool need_dx);
    void collect(const std::string& prefix, NamedParams& out);
    int feature_channels() const { return feat_c_; }
    int feature_len(int li) const;
    int depth() const { return static_cast<int>(blocks_.size()); }

private:
    Conv1d stem_;
    std::vector<ResBlock> blocks_;
    std::vector<Tensor> stage_out_;
    int feat_c_ = 0;
};

// Transposed-shape mirror of Net1D with upsampling by 2 per stage; dense
// prediction head for the indirect path. Each up stage mirrors one trunk
// stage exactly (same channels, same resolution), so the trunk's multi-layer
// feature embeddings can be injected stage-wise on the way up.
class DeNet1D {
public:
    DeNet1D() = default;
    DeNet1D(const BlockGraph& g, int out_channels);
    void init(Rng& rng);
    // taps: the trunk's per-stage outputs (deepest last); when present, each
    // up stage adds the mirror stage's embedding to its output
    Tensor forward(const Tensor& f, const std::vector<Tensor>* taps = nullptr);
    // dtaps, when non-null, receives the gradients wrt the injected taps
    // (deepest-last layout matching Net1D::backward_taps)
    Tensor backward(const Tensor& dy, bool need_dx = false, std::vector<Tensor>* dtaps = nullptr);
    void collect(const std::string& prefix, NamedParams& out);
    int depth() const { return static_cast<int>(blocks_.size()); }

private:
    std::vector<ResBlockUp> blocks_;
    Conv1d head_;
    bool used_taps_ = false;
};

// Global-average-pool classifier head.
class ClassifierHead {
public:
    ClassifierHead() = default;
    ClassifierHead(int in_c, int classes);
    void init(Rng& rng);
    Tensor forward(const Tensor& f);             // (n, C, L) -> (n, K, 1)
    Tensor backward(const Tensor& dy, bool need_dx = true);
    void collect(const std::string& prefix, NamedParams& out);

private:
    int in_c_ = 0, classes_ = 0, in_l_ = 0;
    Linear fc_;
    Tensor pooled_;
};

// Light transposed-conv stack lifting bottleneck features back to the
// window length for dense direct-path heads.
class DenseDirectHead {
public:
    DenseDirectHead() = default;
    DenseDirectHead(const BlockGraph& g, int out_channels);
    void init(Rng& rng);
    Tensor forward(const Tensor& phi);
    Tensor backward(const Tensor& dy, bool need_dx = true);
    void collect(const std::string& prefix, NamedParams& out);

private:
    ConvT1d u1_, u2_, u3_;
    Conv1d out_;
    Tensor a1_, a2_, a3_;
};

// ---------------------------------------------------------------------------
// Composed graphs
// ---------------------------------------------------------------------------

// encode -> fuse -> decode; used for both autoencoder pretraining and the
// heart-sound-to-ECG generator.
class Autoencoder {
public:
    Autoencoder() = default;
    explicit Autoencoder(const BlockGraph& g);
    void init(Rng& rng);
    Tensor forward(const Tensor& x);
    void backward(const Tensor& dy);
    const Tensor& bottleneck() const { return phi_; }
    std::array<Tensor, 3> encode(const Tensor& x);             // taps only
    Tensor fuse_taps(const std::array<Tensor, 3>& taps);       // phi
    // gradient wrt phi only (stops at bottleneck; for direct-path heads)
    void backward_from_phi(const Tensor& dphi);
    void collect(const std::string& prefix, NamedParams& out);

    Encoder& encoder() { return enc_; }
    Fusion& fusion() { return fuse_; }
    Decoder& decoder() { return dec_; }

private:
    Encoder enc_;
    Fusion fuse_;
    Decoder dec_;
    Tensor phi_;
};

// Net1D trunk plus a classification head for discriminator pretraining.
class Discriminator {
public:
    Discriminator() = default;
    Discriminator(const BlockGraph& g, int classes);
    void init(Rng& rng);
    Tensor features(const Tensor& x, std::vector<Tensor>* taps = nullptr);
    Tensor logits(const Tensor& x);
    void backward_logits(const Tensor& dlogits);
    Tensor backward_features(const Tensor& dfeat, bool need_dx);
    Tensor backward_feature_taps(const std::vector<Tensor>& dtaps, bool need_dx);
    void collect(const std::string& prefix, NamedParams& out);
    Net1D& trunk() { return trunk_; }
    const Net1D& trunk() const { return trunk_; }

    bool pretrained = false;

private:
    Net1D trunk_;
    ClassifierHead cls_;
    Tensor feat_;
};

// ---------------------------------------------------------------------------
// Initialization and checkpoints
// ---------------------------------------------------------------------------

// He-normal initialization for conv/linear weights, zero bias, unit norm gain.
double he_std(int fan_in);

struct Checkpoint {
    std::string graph_json;
    std::map<std::string, std::pair<std::vector<int>, std::vector<float>>> tensors;
    std::map<std::string, std::string> meta;  // free-form string metadata
};

void checkpoint_store(Checkpoint& ck, const NamedParams& np);
// copies values into matching params; throws InputError on missing/shape mismatch
void checkpoint_apply(const Checkpoint& ck, NamedParams& np, const std::string& prefix = "");
// as checkpoint_apply, but params named to_prefix+suffix load the checkpoint
// tensor named from_prefix+suffix (cross-module loading by name)
void checkpoint_apply_renamed(const Checkpoint& ck, NamedParams& np, const std::string& from_prefix,
                              const std::string& to_prefix);
bool checkpoint_has_prefix(const Checkpoint& ck, const std::string& prefix);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dualpath::nn
