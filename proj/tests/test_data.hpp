// Shared test fixture: synthetic corpus -> preprocessed windowed splits.
#pragma once

#include "dualpath/protocol.hpp"
#include "dualpath/signalio.hpp"
#include "dualpath/synthgen.hpp"
#include "dualpath/tasks.hpp"

namespace dualpath::testdata {

struct Splits {
    protocol::Windows train;
    protocol::Windows test;
};

inline Splits make_windows(const synth::SynthConfig& cfg) {
    auto gen = synth::generate(cfg);
    std::vector<signalio::RawRecord> pre;
    std::vector<synth::FiducialTrack> tracks;
    for (auto& g : gen) {
        pre.push_back(signalio::preprocess(g.record, signalio::FilterSpec{}));
        tracks.push_back(std::move(g.track));
    }
    auto split = signalio::split_by_ratio(pre);
    Splits out;
    auto fill = [&](const std::vector<signalio::SplitPart>& parts, bool train_mode, protocol::Windows& dst) {
        for (const auto& part : parts) {
            const synth::FiducialTrack& track = tracks[static_cast<std::size_t>(part.record_id)];
            signalio::LabelContext ctx;
            ctx.bmi_class = tasks::bmi_class(part.rec.attributes.bmi);
            ctx.age_class = tasks::age_class(part.rec.attributes.age);
            ctx.base_offset = part.base_offset;
            ctx.record_id = part.record_id;
            ctx.mask_fn = [&track](std::size_t off, std::uint8_t* mask) {
                return synth::labels_from_fiducials(track, off, signalio::kWindowLen, mask);
            };
            auto ws = train_mode ? signalio::window_train(part.rec, ctx, nullptr)
                                 : signalio::window_test(part.rec, ctx, nullptr);
            for (auto& w : ws) dst.push_back(std::move(w));
        }
    };
    fill(split.train, true, out.train);
    fill(split.test, false, out.test);
    return out;
}

inline synth::SynthConfig tiny_corpus(std::uint64_t seed = 77) {
    synth::SynthConfig cfg;
    cfg.n_subjects = 2;
    cfg.seconds_per_subject = 45.0;
    cfg.seed = seed;
    return cfg;
}

inline nn::BlockGraph tiny_graph() {
    nn::BlockGraph g;
    g.scale_den = 8;
    g.base_widths = {16, 32, 64};
    g.disc_base_widths = {16, 16, 32, 32, 64, 64};
    return g;
}

}  // namespace dualpath::testdata
