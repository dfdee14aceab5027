#include "dualpath/netblocks.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace dualpath::nn {

using json = nlohmann::json;
namespace ks = dualpath::kernels;

namespace {

void add_into(Tensor& dst, const Tensor& src) {
    assert(dst.same_shape(src));
    for (std::size_t i = 0; i < dst.size(); ++i) dst.v[i] += src.v[i];
}

void check_finite(const Tensor& t, const std::string& where) {
    if (!all_finite(t.v)) throw DivergenceError("non-finite activation in " + where);
}

}  // namespace

// ---------------------------------------------------------------------------
// BlockGraph
// ---------------------------------------------------------------------------
const char* head_kind_name(HeadKind k) {
    switch (k) {
        case HeadKind::classifier: return "classifier";
        case HeadKind::segmenter: return "segmenter";
        case HeadKind::regressor: return "regressor";
        case HeadKind::ecg_decoder: return "ecg_decoder";
    }
    return "?";
}

HeadKind head_kind_from_name(const std::string& s) {
    if (s == "classifier") return HeadKind::classifier;
    if (s == "segmenter") return HeadKind::segmenter;
    if (s == "regressor") return HeadKind::regressor;
    if (s == "ecg_decoder") return HeadKind::ecg_decoder;
    throw ConfigError("unknown head kind: " + s);
}

int BlockGraph::width(int stage) const {
    return std::max(1, static_cast<int>(std::floor(base_widths.at(stage) * channel_scale())));
}

int BlockGraph::disc_width(int stage) const {
    return std::max(1, static_cast<int>(std::floor(disc_base_widths.at(stage) * channel_scale())));
}

void BlockGraph::validate() const {
    static const int allowed[] = {1, 2, 4, 8, 16, 32};
    if (std::find(std::begin(allowed), std::end(allowed), scale_den) == std::end(allowed))
        throw ConfigError("channel_scale must be one of 1, 1/2, 1/4, 1/8, 1/16, 1/32");
    if (encoder_stages != 3) throw ConfigError("encoder_stages is fixed at 3");
    if (static_cast<int>(base_widths.size()) != encoder_stages)
        throw ConfigError("base_widths must list one width per encoder stage");
    if (static_cast<int>(disc_base_widths.size()) != discriminator_depth)
        throw ConfigError("disc_base_widths must list one width per discriminator stage");
    if (kernel % 2 != 1 || kernel < 3) throw ConfigError("kernel must be odd and >= 3");
    for (int w : base_widths)
        if (w < 1) throw ConfigError("base widths must be positive");
}

std::string BlockGraph::to_json() const {
    json j;
    j["scale_den"] = scale_den;
    j["base_widths"] = base_widths;
    j["disc_base_widths"] = disc_base_widths;
    j["encoder_stages"] = encoder_stages;
    j["discriminator_depth"] = discriminator_depth;
    j["kernel"] = kernel;
    j["perceptual_multilayer"] = perceptual_multilayer;
    return j.dump();
}

BlockGraph BlockGraph::from_json(const std::string& text) {
    json j = json::parse(text);
    BlockGraph g;
    g.scale_den = j.value("scale_den", 1);
    if (j.contains("base_widths")) g.base_widths = j["base_widths"].get<std::vector<int>>();
    if (j.contains("disc_base_widths")) g.disc_base_widths = j["disc_base_widths"].get<std::vector<int>>();
    g.encoder_stages = j.value("encoder_stages", 3);
    g.discriminator_depth = j.value("discriminator_depth", 6);
    g.kernel = j.value("kernel", 7);
    g.perceptual_multilayer = j.value("perceptual_multilayer", false);
    g.validate();
    return g;
}

int parse_channel_scale(const std::string& text) {
    std::string s = text;
    s.erase(std::remove_if(s.begin(), s.end(), [](char c) { return c == ' '; }), s.end());
    auto slash = s.find('/');
    int den;
    if (slash != std::string::npos) {
        const std::string num = s.substr(0, slash);
        const std::string d = s.substr(slash + 1);
        if (num != "1") throw ConfigError("channel_scale fraction must have numerator 1: " + text);
        den = std::stoi(d);
    } else {
        const double v = std::stod(s);
        if (v <= 0.0) throw ConfigError("channel_scale must be positive: " + text);
        den = static_cast<int>(std::llround(1.0 / v));
        if (std::fabs(1.0 / den - v) > 1e-12) throw ConfigError("channel_scale not of the form 1/2^k: " + text);
    }
    static const int allowed[] = {1, 2, 4, 8, 16, 32};
    if (std::find(std::begin(allowed), std::end(allowed), den) == std::end(allowed))
        throw ConfigError("channel_scale must be one of 1, 1/2, 1/4, 1/8, 1/16, 1/32: " + text);
    return den;
}

// ---------------------------------------------------------------------------
// Param bookkeeping
// ---------------------------------------------------------------------------
void Param::resize(std::vector<int> s) {
    shape = std::move(s);
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    w.assign(n, 0.0);
    g.assign(n, 0.0);
}

Param* NamedParams::find(const std::string& name) const {
    for (const auto& [n, p] : items)
        if (n == name) return p;
    return nullptr;
}

std::uint64_t params_hash(const NamedParams& np, const std::string& prefix) {
    std::vector<std::pair<std::string, Param*>> sel;
    for (const auto& it : np.items)
        if (it.first.rfind(prefix, 0) == 0) sel.push_back(it);
    std::sort(sel.begin(), sel.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (const auto& [name, p] : sel) {
        h = fnv1a64(name.data(), name.size(), h);
        for (double x : p->w) {
            const float f = static_cast<float>(x);
            h = fnv1a64(&f, sizeof(f), h);
        }
    }
    return h;
}

std::size_t params_count(const NamedParams& np, const std::string& prefix) {
    std::size_t n = 0;
    for (const auto& [name, p] : np.items)
        if (name.rfind(prefix, 0) == 0) n += p->size();
    return n;
}

void set_trainable(NamedParams& np, const std::string& prefix, bool trainable) {
    for (auto& [name, p] : np.items)
        if (name.rfind(prefix, 0) == 0) p->trainable = trainable;
}

double he_std(int fan_in) { return std::sqrt(2.0 / std::max(1, fan_in)); }

// ---------------------------------------------------------------------------
// Conv1d
// ---------------------------------------------------------------------------
Conv1d::Conv1d(int in_c, int out_c, int k, int stride, int pad)
    : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad) {
    w_.resize({out_c, in_c, k});
    b_.resize({out_c});
}

void Conv1d::init(Rng& rng) {
    const double s = he_std(in_c_ * k_);
    for (auto& x : w_.w) x = rng.normal(0.0, s);
    std::fill(b_.w.begin(), b_.w.end(), 0.0);
}

Tensor Conv1d::forward(const Tensor& x) {
    assert(x.c == in_c_);
    x_ = x;
    Tensor y(x.n, out_c_, out_len(x.l));
    ks::conv1d_fwd(x, w_.w, b_.w, out_c_, k_, stride_, pad_, y);
    return y;
}

Tensor Conv1d::backward(const Tensor& dy, bool need_dx) {
    if (w_.trainable) ks::conv1d_bwd_params(x_, dy, k_, stride_, pad_, w_.g, b_.g);
    Tensor dx;
    if (need_dx) {
        dx = Tensor(x_.n, in_c_, x_.l);
        ks::conv1d_bwd_input(dy, w_.w, in_c_, k_, stride_, pad_, dx);
    }
    return dx;
}

void Conv1d::collect(const std::string& prefix, NamedParams& out) {
    out.add(prefix + ".w", &w_);
    out.add(prefix + ".b", &b_);
}

// ---------------------------------------------------------------------------
// ConvT1d
// ---------------------------------------------------------------------------
ConvT1d::ConvT1d(int in_c, int out_c, int k, int stride, int pad)
    : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad) {
    w_.resize({in_c, out_c, k});
    b_.resize({out_c});
}

void ConvT1d::init(Rng& rng) {
    const double s = he_std(in_c_ * k_);
    for (auto& x : w_.w) x = rng.normal(0.0, s);
    std::fill(b_.w.begin(), b_.w.end(), 0.0);
}

Tensor ConvT1d::forward(const Tensor& x) {
    assert(x.c == in_c_);
    x_ = x;
    Tensor y(x.n, out_c_, out_len(x.l));
    ks::convt1d_fwd(x, w_.w, b_.w, out_c_, k_, stride_, pad_, y);
    return y;
}

Tensor ConvT1d::backward(const Tensor& dy, bool need_dx) {
    if (w_.trainable) ks::convt1d_bwd_params(x_, dy, k_, stride_, pad_, w_.g, b_.g);
    Tensor dx;
    if (need_dx) {
        dx = Tensor(x_.n, in_c_, x_.l);
        ks::convt1d_bwd_input(dy, w_.w, in_c_, k_, stride_, pad_, dx);
    }
    return dx;
}

void ConvT1d::collect(const std::string& prefix, NamedParams& out) {
    out.add(prefix + ".w", &w_);
    out.add(prefix + ".b", &b_);
}

// ---------------------------------------------------------------------------
// InstanceNorm
// ---------------------------------------------------------------------------
InstanceNorm::InstanceNorm(int channels, double eps) : c_(channels), eps_(eps) {
    gamma_.resize({channels});
    beta_.resize({channels});
}

void InstanceNorm::init() {
    std::fill(gamma_.w.begin(), gamma_.w.end(), 1.0);
    std::fill(beta_.w.begin(), beta_.w.end(), 0.0);
}

Tensor InstanceNorm::forward(const Tensor& x) {
    assert(x.c == c_);
    Tensor y(x.n, x.c, x.l);
    xhat_ = Tensor(x.n, x.c, x.l);
    istd_.assign(static_cast<std::size_t>(x.n) * x.c, 0.0);
    ks::instnorm_fwd(x, gamma_.w, beta_.w, eps_, y, xhat_, istd_);
    return y;
}

Tensor InstanceNorm::backward(const Tensor& dy) {
    Tensor dx(dy.n, dy.c, dy.l);
    if (gamma_.trainable) {
        ks::instnorm_bwd(dy, gamma_.w, xhat_, istd_, dx, gamma_.g, beta_.g);
    } else {
        std::vector<double> dg(gamma_.w.size(), 0.0), db(beta_.w.size(), 0.0);
        ks::instnorm_bwd(dy, gamma_.w, xhat_, istd_, dx, dg, db);
    }
    return dx;
}

void InstanceNorm::collect(const std::string& prefix, NamedParams& out) {
    out.add(prefix + ".g", &gamma_);
    out.add(prefix + ".b", &beta_);
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------
Linear::Linear(int in_d, int out_d) : in_d_(in_d), out_d_(out_d) {
    w_.resize({out_d, in_d});
    b_.resize({out_d});
}

void Linear::init(Rng& rng) {
    const double s = he_std(in_d_);
    for (auto& x : w_.w) x = rng.normal(0.0, s);
    std::fill(b_.w.begin(), b_.w.end(), 0.0);
}

Tensor Linear::forward(const Tensor& x) {
    assert(x.c == in_d_ && x.l == 1);
    x_ = x;
    Tensor y(x.n, out_d_, 1);
    ks::linear_fwd(x, w_.w, b_.w, out_d_, y);
    return y;
}

Tensor Linear::backward(const Tensor& dy, bool need_dx) {
    Tensor dx(x_.n, in_d_, 1);
    if (w_.trainable) {
        ks::linear_bwd(x_, dy, w_.w, dx, w_.g, b_.g);
    } else {
        std::vector<double> dw(w_.w.size(), 0.0), db(b_.w.size(), 0.0);
        ks::linear_bwd(x_, dy, w_.w, dx, dw, db);
    }
    return need_dx ? dx : Tensor();
}

void Linear::collect(const std::string& prefix, NamedParams& out) {
    out.add(prefix + ".w", &w_);
    out.add(prefix + ".b", &b_);
}

// ---------------------------------------------------------------------------
// ResBlock (pre-activation, optional strided downsampling)
// ---------------------------------------------------------------------------
ResBlock::ResBlock(int in_c, int out_c, int stride, int kernel)
    : n1_(in_c), n2_(out_c),
      conv1_(in_c, out_c, kernel, stride, kernel / 2),
      conv2_(out_c, out_c, kernel, 1, kernel / 2),
      has_proj_(in_c != out_c || stride != 1) {
    if (has_proj_) proj_ = Conv1d(in_c, out_c, 1, stride, 0);
}

void ResBlock::init(Rng& rng) {
    n1_.init();
    conv1_.init(rng);
    n2_.init();
    conv2_.init(rng);
    if (has_proj_) proj_.init(rng);
}

Tensor ResBlock::forward(const Tensor& x) {
    x_in_ = x;
    a1_ = n1_.forward(x);
    Tensor r1(a1_.n, a1_.c, a1_.l);
    ks::relu_fwd(a1_, r1);
    Tensor h = conv1_.forward(r1);
    a2_ = n2_.forward(h);
    Tensor r2(a2_.n, a2_.c, a2_.l);
    ks::relu_fwd(a2_, r2);
    Tensor y = conv2_.forward(r2);
    if (has_proj_) {
        Tensor s = proj_.forward(x);
        add_into(y, s);
    } else {
        add_into(y, x);
    }
    return y;
}

Tensor ResBlock::backward(const Tensor& dy, bool need_dx) {
    Tensor d_r2 = conv2_.backward(dy, true);
    Tensor d_a2(d_r2.n, d_r2.c, d_r2.l);
    ks::relu_bwd(d_r2, a2_, d_a2);
    Tensor d_h = n2_.backward(d_a2);
    Tensor d_r1 = conv1_.backward(d_h, true);
    Tensor d_a1(d_r1.n, d_r1.c, d_r1.l);
    ks::relu_bwd(d_r1, a1_, d_a1);
    Tensor dx = n1_.backward(d_a1);
    if (has_proj_) {
        Tensor ds = proj_.backward(dy, need_dx);
        if (need_dx) add_into(dx, ds);
    } else {
        add_into(dx, dy);
    }
    return dx;
}

void ResBlock::collect(const std::string& prefix, NamedParams& out) {
    n1_.collect(prefix + ".n1", out);
    conv1_.collect(prefix + ".conv1", out);
    n2_.collect(prefix + ".n2", out);
    conv2_.collect(prefix + ".conv2", out);
    if (has_proj_) proj_.collect(prefix + ".proj", out);
}

// ---------------------------------------------------------------------------
// ResBlockUp
// ---------------------------------------------------------------------------
ResBlockUp::ResBlockUp(int in_c, int out_c, int kernel)
    : n1_(in_c), n2_(out_c),
      up_(in_c, out_c, 4, 2, 1),
      conv2_(out_c, out_c, kernel, 1, kernel / 2),
      has_proj_(in_c != out_c),
      in_c_(in_c), out_c_(out_c) {
    if (has_proj_) proj_ = Conv1d(in_c, out_c, 1, 1, 0);
}

void ResBlockUp::init(Rng& rng) {
    n1_.init();
    up_.init(rng);
    n2_.init();
    conv2_.init(rng);
    if (has_proj_) proj_.init(rng);
}

Tensor ResBlockUp::forward(const Tensor& x) {
    x_in_ = x;
    a1_ = n1_.forward(x);
    Tensor r1(a1_.n, a1_.c, a1_.l);
    ks::relu_fwd(a1_, r1);
    Tensor h = up_.forward(r1);
    a2_ = n2_.forward(h);
    Tensor r2(a2_.n, a2_.c, a2_.l);
    ks::relu_fwd(a2_, r2);
    Tensor y = conv2_.forward(r2);
    // shortcut: nearest-neighbor upsample, then pointwise projection if the
    // channel count changes
    Tensor upx(x.n, x.c, 2 * x.l);
    ks::upsample2_fwd(x, upx);
    if (has_proj_) {
        Tensor s = proj_.forward(upx);
        add_into(y, s);
    } else {
        add_into(y, upx);
    }
    return y;
}

Tensor ResBlockUp::backward(const Tensor& dy, bool need_dx) {
    Tensor d_r2 = conv2_.backward(dy, true);
    Tensor d_a2(d_r2.n, d_r2.c, d_r2.l);
    ks::relu_bwd(d_r2, a2_, d_a2);
    Tensor d_h = n2_.backward(d_a2);
    Tensor d_r1 = up_.backward(d_h, true);
    Tensor d_a1(d_r1.n, d_r1.c, d_r1.l);
    ks::relu_bwd(d_r1, a1_, d_a1);
    Tensor dx = n1_.backward(d_a1);
    Tensor d_up = has_proj_ ? proj_.backward(dy, true) : dy;
    Tensor d_short(x_in_.n, x_in_.c, x_in_.l);
    ks::upsample2_bwd(d_up, d_short);
    add_into(dx, d_short);
    return need_dx ? dx : dx;  // dx is needed internally either way
}

void ResBlockUp::collect(const std::string& prefix, NamedParams& out) {
    n1_.collect(prefix + ".n1", out);
    up_.collect(prefix + ".up", out);
    n2_.collect(prefix + ".n2", out);
    conv2_.collect(prefix + ".conv2", out);
    if (has_proj_) proj_.collect(prefix + ".proj", out);
}

// ---------------------------------------------------------------------------
// Encoder
// ---------------------------------------------------------------------------
Encoder::Encoder(const BlockGraph& g)
    : stem_(1, g.width(0), g.kernel, 1, g.kernel / 2),
      s1_(g.width(0), g.width(0), 2, g.kernel),
      s2_(g.width(0), g.width(1), 2, g.kernel),
      s3_(g.width(1), g.width(2), 2, g.kernel) {}

void Encoder::init(Rng& rng) {
    stem_.init(rng);
    s1_.init(rng);
    s2_.init(rng);
    s3_.init(rng);
}

std::array<Tensor, 3> Encoder::forward(const Tensor& x) {
    Tensor h = stem_.forward(x);
    check_finite(h, "encoder stage 0 (stem)");
    Tensor t1 = s1_.forward(h);
    check_finite(t1, "encoder stage 1");
    Tensor t2 = s2_.forward(t1);
    check_finite(t2, "encoder stage 2");
    Tensor t3 = s3_.forward(t2);
    check_finite(t3, "encoder stage 3");
    return {t1, t2, t3};
}

Tensor Encoder::backward(const std::array<Tensor, 3>& dtaps, bool need_dx) {
    Tensor d2 = s3_.backward(dtaps[2], true);
    if (dtaps[1].size() > 0) add_into(d2, dtaps[1]);
    Tensor d1 = s2_.backward(d2, true);
    if (dtaps[0].size() > 0) add_into(d1, dtaps[0]);
    Tensor dh = s1_.backward(d1, true);
    return stem_.backward(dh, need_dx);
}

void Encoder::collect(const std::string& prefix, NamedParams& out) {
    stem_.collect(prefix + ".stem", out);
    s1_.collect(prefix + ".s1", out);
    s2_.collect(prefix + ".s2", out);
    s3_.collect(prefix + ".s3", out);
}

// ---------------------------------------------------------------------------
// Fusion
// ---------------------------------------------------------------------------
Fusion::Fusion(const BlockGraph& g)
    : a1a_(g.width(0), g.width(0), 4, 2, 1),
      a1b_(g.width(0), g.width(0), 4, 2, 1),
      a2_(g.width(1), g.width(1), 4, 2, 1),
      pw_(g.width(0) + g.width(1) + g.width(2), g.bottleneck_channels(), 1, 1, 0),
      rb4_(g.bottleneck_channels(), g.bottleneck_channels(), 1, g.kernel),
      c1_(g.width(0)), c2_(g.width(1)), c3_(g.width(2)) {}

void Fusion::init(Rng& rng) {
    a1a_.init(rng);
    a1b_.init(rng);
    a2_.init(rng);
    pw_.init(rng);
    rb4_.init(rng);
}

Tensor Fusion::forward(const std::array<Tensor, 3>& taps) {
    const Tensor& t1 = taps[0];
    const Tensor& t2 = taps[1];
    const Tensor& t3 = taps[2];
    if (t1.l != 4 * t3.l || t2.l != 2 * t3.l)
        throw InputError("fusion: tap resolutions are not in 4:2:1 ratio");
    Tensor d1 = a1b_.forward(a1a_.forward(t1));
    Tensor d2 = a2_.forward(t2);
    if (d1.l != t3.l || d2.l != t3.l)
        throw InputError("fusion: resolution mismatch after alignment");
    // concatenate along channels: [d1; d2; t3]
    Tensor cat(t3.n, c1_ + c2_ + c3_, t3.l);
    for (int i = 0; i < t3.n; ++i) {
        std::memcpy(cat.row(i, 0), d1.row(i, 0), sizeof(double) * c1_ * t3.l);
        std::memcpy(cat.row(i, c1_), d2.row(i, 0), sizeof(double) * c2_ * t3.l);
        std::memcpy(cat.row(i, c1_ + c2_), t3.row(i, 0), sizeof(double) * c3_ * t3.l);
    }
    return rb4_.forward(pw_.forward(cat));
}

Tensor Fusion::forward_deepest_only(const std::array<Tensor, 3>& taps) {
    std::array<Tensor, 3> z = {Tensor(taps[0].n, taps[0].c, taps[0].l),
                               Tensor(taps[1].n, taps[1].c, taps[1].l), taps[2]};
    return forward(z);
}

std::array<Tensor, 3> Fusion::backward(const Tensor& dphi) {
    Tensor dpw = rb4_.backward(dphi, true);
    Tensor dcat = pw_.backward(dpw, true);
    Tensor dd1(dcat.n, c1_, dcat.l), dd2(dcat.n, c2_, dcat.l), dt3(dcat.n, c3_, dcat.l);
    for (int i = 0; i < dcat.n; ++i) {
        std::memcpy(dd1.row(i, 0), dcat.row(i, 0), sizeof(double) * c1_ * dcat.l);
        std::memcpy(dd2.row(i, 0), dcat.row(i, c1_), sizeof(double) * c2_ * dcat.l);
        std::memcpy(dt3.row(i, 0), dcat.row(i, c1_ + c2_), sizeof(double) * c3_ * dcat.l);
    }
    Tensor dt1 = a1a_.backward(a1b_.backward(dd1, true), true);
    Tensor dt2 = a2_.backward(dd2, true);
    return {dt1, dt2, dt3};
}

void Fusion::collect(const std::string& prefix, NamedParams& out) {
    a1a_.collect(prefix + ".a1a", out);
    a1b_.collect(prefix + ".a1b", out);
    a2_.collect(prefix + ".a2", out);
    pw_.collect(prefix + ".pw", out);
    rb4_.collect(prefix + ".rb4", out);
}

// ---------------------------------------------------------------------------
// Decoder
// ---------------------------------------------------------------------------
Decoder::Decoder(const BlockGraph& g, int out_channels)
    : u1_(g.bottleneck_channels(), g.width(1), g.kernel),
      u2_(g.width(1), g.width(0), g.kernel),
      u3_(g.width(0), g.width(0), g.kernel),
      head_(g.width(0), out_channels, g.kernel, 1, g.kernel / 2) {}

void Decoder::init(Rng& rng) {
    u1_.init(rng);
    u2_.init(rng);
    u3_.init(rng);
    head_.init(rng);
}

Tensor Decoder::forward(const Tensor& phi) {
    Tensor h = u3_.forward(u2_.forward(u1_.forward(phi)));
    Tensor y = head_.forward(h);
    if (y.l != 8 * phi.l) throw InputError("decoder: output length mismatch");
    return y;
}

Tensor Decoder::backward(const Tensor& dy) {
    Tensor dh = head_.backward(dy, true);
    return u1_.backward(u2_.backward(u3_.backward(dh, true), true), true);
}

void Decoder::collect(const std::string& prefix, NamedParams& out) {
    u1_.collect(prefix + ".u1", out);
    u2_.collect(prefix + ".u2", out);
    u3_.collect(prefix + ".u3", out);
    head_.collect(prefix + ".head", out);
}

// ---------------------------------------------------------------------------
// Net1D
// ---------------------------------------------------------------------------
Net1D::Net1D(const BlockGraph& g) : stem_(1, g.disc_width(0), g.kernel, 1, g.kernel / 2) {
    int prev = g.disc_width(0);
    for (int s = 0; s < g.discriminator_depth; ++s) {
        const int w = g.disc_width(s);
        blocks_.emplace_back(prev, w, 2, g.kernel);
        prev = w;
    }
    feat_c_ = prev;
}

void Net1D::init(Rng& rng) {
    stem_.init(rng);
    for (auto& b : blocks_) b.init(rng);
}

int Net1D::feature_len(int li) const { return li >> static_cast<int>(blocks_.size()); }

Tensor Net1D::forward(const Tensor& x, std::vector<Tensor>* taps) {
    stage_out_.clear();
    Tensor h = stem_.forward(x);
    for (auto& b : blocks_) {
        h = b.forward(h);
        stage_out_.push_back(h);
    }
    if (taps) *taps = stage_out_;
    return h;
}

Tensor Net1D::backward(const Tensor& dfinal, bool need_dx) {
    std::vector<Tensor> dtaps(blocks_.size());
    dtaps.back() = dfinal;
    return backward_taps(dtaps, need_dx);
}

Tensor Net1D::backward_taps(const std::vector<Tensor>& dtaps, bool need_dx) {
    assert(dtaps.size() == blocks_.size());
    Tensor d;
    for (int s = static_cast<int>(blocks_.size()) - 1; s >= 0; --s) {
        if (d.size() == 0) {
            d = dtaps[s];
        } else if (dtaps[s].size() > 0) {
            add_into(d, dtaps[s]);
        }
        if (d.size() == 0) continue;  // nothing injected this deep yet
        d = blocks_[s].backward(d, true);
    }
    return stem_.backward(d, need_dx);
}

void Net1D::collect(const std::string& prefix, NamedParams& out) {
    stem_.collect(prefix + ".stem", out);
    for (std::size_t s = 0; s < blocks_.size(); ++s)
        blocks_[s].collect(prefix + ".b" + std::to_string(s), out);
}

// ---------------------------------------------------------------------------
// DeNet1D
// ---------------------------------------------------------------------------
DeNet1D::DeNet1D(const BlockGraph& g, int out_channels) {
    // mirror of Net1D: widths walk the discriminator ladder in reverse
    std::vector<int> widths;
    for (int s = 0; s < g.discriminator_depth; ++s) widths.push_back(g.disc_width(s));
    int prev = widths.back();
    for (int s = g.discriminator_depth - 1; s >= 1; --s) {
        blocks_.emplace_back(prev, widths[static_cast<std::size_t>(s - 1)], g.kernel);
        prev = widths[static_cast<std::size_t>(s - 1)];
    }
    blocks_.emplace_back(prev, widths[0], g.kernel);
    head_ = Conv1d(widths[0], out_channels, g.kernel, 1, g.kernel / 2);
}

void DeNet1D::init(Rng& rng) {
    for (auto& b : blocks_) b.init(rng);
    head_.init(rng);
}

Tensor DeNet1D::forward(const Tensor& f, const std::vector<Tensor>* taps) {
    const int depth = static_cast<int>(blocks_.size());
    used_taps_ = taps != nullptr;
    if (taps && static_cast<int>(taps->size()) != depth)
        throw InputError("DeNet1D: tap count does not match the trunk depth");
    Tensor h = f;
    for (int i = 0; i < depth; ++i) {
        h = blocks_[static_cast<std::size_t>(i)].forward(h);
        // stage i mirrors trunk stage depth-2-i; the topmost stage has no
        // mirror partner (the trunk stem is not a stage)
        const int tap = depth - 2 - i;
        if (taps && tap >= 0) add_into(h, (*taps)[static_cast<std::size_t>(tap)]);
    }
    return head_.forward(h);
}

Tensor DeNet1D::backward(const Tensor& dy, bool need_dx, std::vector<Tensor>* dtaps) {
    const int depth = static_cast<int>(blocks_.size());
    if (dtaps) dtaps->assign(static_cast<std::size_t>(depth), Tensor());
    Tensor d = head_.backward(dy, true);
    for (int i = depth - 1; i >= 0; --i) {
        const int tap = depth - 2 - i;
        if (used_taps_ && dtaps && tap >= 0) (*dtaps)[static_cast<std::size_t>(tap)] = d;
        d = blocks_[static_cast<std::size_t>(i)].backward(d, i > 0 || need_dx);
    }
    return d;
}

void DeNet1D::collect(const std::string& prefix, NamedParams& out) {
    for (std::size_t s = 0; s < blocks_.size(); ++s)
        blocks_[s].collect(prefix + ".b" + std::to_string(s), out);
    head_.collect(prefix + ".head", out);
}

// ---------------------------------------------------------------------------
// Heads
// ---------------------------------------------------------------------------
ClassifierHead::ClassifierHead(int in_c, int classes)
    : in_c_(in_c), classes_(classes), fc_(in_c, classes) {}

void ClassifierHead::init(Rng& rng) { fc_.init(rng); }

Tensor ClassifierHead::forward(const Tensor& f) {
    in_l_ = f.l;
    pooled_ = Tensor(f.n, f.c, 1);
    ks::gap_fwd(f, pooled_);
    return fc_.forward(pooled_);
}

Tensor ClassifierHead::backward(const Tensor& dy, bool need_dx) {
    Tensor dpool = fc_.backward(dy, true);
    if (!need_dx) return Tensor();
    Tensor dx(pooled_.n, in_c_, in_l_);
    ks::gap_bwd(dpool, in_l_, dx);
    return dx;
}

void ClassifierHead::collect(const std::string& prefix, NamedParams& out) {
    fc_.collect(prefix + ".fc", out);
}

DenseDirectHead::DenseDirectHead(const BlockGraph& g, int out_channels) {
    const int cb = g.bottleneck_channels();
    u1_ = ConvT1d(cb, cb, 4, 2, 1);
    u2_ = ConvT1d(cb, cb, 4, 2, 1);
    u3_ = ConvT1d(cb, cb, 4, 2, 1);
    out_ = Conv1d(cb, out_channels, g.kernel, 1, g.kernel / 2);
}

void DenseDirectHead::init(Rng& rng) {
    u1_.init(rng);
    u2_.init(rng);
    u3_.init(rng);
    out_.init(rng);
}

Tensor DenseDirectHead::forward(const Tensor& phi) {
    a1_ = u1_.forward(phi);
    Tensor r1(a1_.n, a1_.c, a1_.l);
    ks::relu_fwd(a1_, r1);
    a2_ = u2_.forward(r1);
    Tensor r2(a2_.n, a2_.c, a2_.l);
    ks::relu_fwd(a2_, r2);
    a3_ = u3_.forward(r2);
    Tensor r3(a3_.n, a3_.c, a3_.l);
    ks::relu_fwd(a3_, r3);
    return out_.forward(r3);
}

Tensor DenseDirectHead::backward(const Tensor& dy, bool need_dx) {
    Tensor d3 = out_.backward(dy, true);
    Tensor da3(d3.n, d3.c, d3.l);
    ks::relu_bwd(d3, a3_, da3);
    Tensor d2 = u3_.backward(da3, true);
    Tensor da2(d2.n, d2.c, d2.l);
    ks::relu_bwd(d2, a2_, da2);
    Tensor d1 = u2_.backward(da2, true);
    Tensor da1(d1.n, d1.c, d1.l);
    ks::relu_bwd(d1, a1_, da1);
    return u1_.backward(da1, need_dx);
}

void DenseDirectHead::collect(const std::string& prefix, NamedParams& out) {
    u1_.collect(prefix + ".u1", out);
    u2_.collect(prefix + ".u2", out);
    u3_.collect(prefix + ".u3", out);
    out_.collect(prefix + ".out", out);
}

// ---------------------------------------------------------------------------
// Autoencoder
// ---------------------------------------------------------------------------
Autoencoder::Autoencoder(const BlockGraph& g) : enc_(g), fuse_(g), dec_(g, 1) {}

void Autoencoder::init(Rng& rng) {
    enc_.init(rng);
    fuse_.init(rng);
    dec_.init(rng);
}

Tensor Autoencoder::forward(const Tensor& x) {
    auto taps = enc_.forward(x);
    phi_ = fuse_.forward(taps);
    Tensor y = dec_.forward(phi_);
    if (y.l != x.l) throw InputError("autoencoder: output length != input length");
    return y;
}

std::array<Tensor, 3> Autoencoder::encode(const Tensor& x) { return enc_.forward(x); }

Tensor Autoencoder::fuse_taps(const std::array<Tensor, 3>& taps) {
    phi_ = fuse_.forward(taps);
    return phi_;
}

void Autoencoder::backward(const Tensor& dy) {
    Tensor dphi = dec_.backward(dy);
    auto dtaps = fuse_.backward(dphi);
    enc_.backward(dtaps, false);
}

void Autoencoder::backward_from_phi(const Tensor& dphi) {
    auto dtaps = fuse_.backward(dphi);
    enc_.backward(dtaps, false);
}

void Autoencoder::collect(const std::string& prefix, NamedParams& out) {
    enc_.collect(prefix + ".enc", out);
    fuse_.collect(prefix + ".fuse", out);
    dec_.collect(prefix + ".dec", out);
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------
Discriminator::Discriminator(const BlockGraph& g, int classes)
    : trunk_(g), cls_(trunk_.feature_channels(), classes) {}

void Discriminator::init(Rng& rng) {
    trunk_.init(rng);
    cls_.init(rng);
}

Tensor Discriminator::features(const Tensor& x, std::vector<Tensor>* taps) {
    feat_ = trunk_.forward(x, taps);
    return feat_;
}

Tensor Discriminator::logits(const Tensor& x) {
    features(x);
    return cls_.forward(feat_);
}

void Discriminator::backward_logits(const Tensor& dlogits) {
    Tensor dfeat = cls_.backward(dlogits, true);
    trunk_.backward(dfeat, false);
}

Tensor Discriminator::backward_features(const Tensor& dfeat, bool need_dx) {
    return trunk_.backward(dfeat, need_dx);
}

Tensor Discriminator::backward_feature_taps(const std::vector<Tensor>& dtaps, bool need_dx) {
    return trunk_.backward_taps(dtaps, need_dx);
}

void Discriminator::collect(const std::string& prefix, NamedParams& out) {
    trunk_.collect(prefix + ".trunk", out);
    cls_.collect(prefix + ".cls", out);
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------
namespace {
constexpr char kMagic[8] = {'D', 'P', 'C', 'K', '0', '0', '0', '1'};
}

void checkpoint_store(Checkpoint& ck, const NamedParams& np) {
    for (const auto& [name, p] : np.items) {
        std::vector<float> data(p->w.size());
        for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<float>(p->w[i]);
        ck.tensors[name] = {p->shape, std::move(data)};
    }
}

void checkpoint_apply(const Checkpoint& ck, NamedParams& np, const std::string& prefix) {
    for (auto& [name, p] : np.items) {
        if (!prefix.empty() && name.rfind(prefix, 0) != 0) continue;
        auto it = ck.tensors.find(name);
        if (it == ck.tensors.end()) throw InputError("checkpoint missing tensor: " + name);
        const auto& [shape, data] = it->second;
        if (shape != p->shape || data.size() != p->w.size())
            throw InputError("checkpoint shape mismatch for tensor: " + name);
        for (std::size_t i = 0; i < data.size(); ++i) p->w[i] = static_cast<double>(data[i]);
    }
}

void checkpoint_apply_renamed(const Checkpoint& ck, NamedParams& np, const std::string& from_prefix,
                              const std::string& to_prefix) {
    for (auto& [name, p] : np.items) {
        if (name.rfind(to_prefix, 0) != 0) continue;
        const std::string src = from_prefix + name.substr(to_prefix.size());
        auto it = ck.tensors.find(src);
        if (it == ck.tensors.end()) throw InputError("checkpoint missing tensor: " + src);
        const auto& [shape, data] = it->second;
        if (shape != p->shape || data.size() != p->w.size())
            throw InputError("checkpoint shape mismatch for tensor: " + src);
        for (std::size_t i = 0; i < data.size(); ++i) p->w[i] = static_cast<double>(data[i]);
    }
}

bool checkpoint_has_prefix(const Checkpoint& ck, const std::string& prefix) {
    for (const auto& [name, _] : ck.tensors)
        if (name.rfind(prefix, 0) == 0) return true;
    return false;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    json index;
    index["graph"] = json::parse(ck.graph_json.empty() ? "{}" : ck.graph_json);
    index["meta"] = ck.meta;
    json tens = json::array();
    for (const auto& [name, sd] : ck.tensors) {
        json t;
        t["name"] = name;
        t["shape"] = sd.first;
        tens.push_back(t);
    }
    index["tensors"] = tens;
    const std::string header = index.dump();

    std::string out;
    out.append(kMagic, sizeof(kMagic));
    const std::uint64_t len = header.size();
    out.append(reinterpret_cast<const char*>(&len), sizeof(len));
    out.append(header);
    for (const auto& [name, sd] : ck.tensors)
        out.append(reinterpret_cast<const char*>(sd.second.data()), sd.second.size() * sizeof(float));
    atomic_write_file(path, out);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string buf = read_file(path);
    if (buf.size() < sizeof(kMagic) + sizeof(std::uint64_t) ||
        std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw InputError("not a checkpoint file: " + path.string());
    std::uint64_t len = 0;
    std::memcpy(&len, buf.data() + sizeof(kMagic), sizeof(len));
    std::size_t off = sizeof(kMagic) + sizeof(std::uint64_t);
    if (off + len > buf.size()) throw InputError("truncated checkpoint header: " + path.string());
    json index = json::parse(buf.substr(off, len));
    off += len;

    Checkpoint ck;
    ck.graph_json = index["graph"].dump();
    if (index.contains("meta"))
        for (auto& [k, v] : index["meta"].items()) ck.meta[k] = v.get<std::string>();
    for (const auto& t : index["tensors"]) {
        const std::string name = t["name"].get<std::string>();
        const std::vector<int> shape = t["shape"].get<std::vector<int>>();
        std::size_t n = 1;
        for (int d : shape) n *= static_cast<std::size_t>(d);
        if (off + n * sizeof(float) > buf.size())
            throw InputError("truncated checkpoint data: " + path.string());
        std::vector<float> data(n);
        std::memcpy(data.data(), buf.data() + off, n * sizeof(float));
        off += n * sizeof(float);
        ck.tensors[name] = {shape, std::move(data)};
    }
    return ck;
}

}  // namespace dualpath::nn
