// Acceptance suite: runs every acceptance criterion at its stated
// tolerance and prints one PASS/FAIL line per criterion. Exit status is
// the number of failed criteria.
//
// Usage: nexus_acceptance [--only 1,2,...] [--tmp DIR]
// The nexus CLI path comes from the build (NEXUS_CLI), overridable with
// --cli PATH.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "../common/gradsuite.hpp"
#include "../common/oracles.hpp"
#include "nexus/error.hpp"
#include "nexus/layers.hpp"
#include "nexus/loss.hpp"
#include "nexus/metrics.hpp"
#include "nexus/model.hpp"
#include "nexus/morphology.hpp"
#include "nexus/optim.hpp"
#include "nexus/patches.hpp"
#include "nexus/phantom.hpp"
#include "nexus/segment.hpp"
#include "nexus/train.hpp"
#include "nexus/volume.hpp"

using namespace nexus;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

std::string g_cli = NEXUS_CLI;
fs::path g_tmp;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string file_bytes(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("missing file " + path.string());
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = g_cli + " " + args + " >/dev/null 2>&1";
    return WEXITSTATUS(std::system(cmd.c_str()));
}

// ---------------------------------------------------------------- criteria

/// Full-scale benchmark results are out of scope by design; say so.
bool criterion1(std::string& detail) {
    detail =
        "published full-scale reference results (BRATS 2013 ILinear dice 0.87/0.89/0.92, "
        "5-10 min whole-brain segmentation) need the licensed BRATS data and full-scale "
        "training; not reproducible at desk scale, property-based checks substitute";
    return true;
}

/// Gradient suite across all layer types, 1e-4 relative, under 2 minutes.
bool criterion2(std::string& detail) {
    const auto res = testutil::run_gradient_suite(20);
    std::ostringstream os;
    os << "conv/pool/relu/maxout/batchnorm/dense/softmax+nll vs central differences: worst "
       << res.worst_rel << " rel on " << res.instances_per_layer << " instances each, "
       << res.seconds << " s";
    if (!res.pass) os << " (first failure: " << res.first_failure << ")";
    detail = os.str();
    return res.pass && res.seconds < 120.0;
}

/// Dimension contract for all five architectures.
bool criterion3(std::string& detail) {
    bool ok = true;
    std::ostringstream os;
    Rng data(77);
    Tensor p33({4, 33, 33});
    Tensor p15({4, 15, 15});
    p33.gaussian_fill(data, 1.0);
    p15.gaussian_fill(data, 1.0);
    for (Arch arch : all_archs()) {
        Rng rng(7);
        NexusModel model = build_model(arch, ModelConfig{}, rng);
        const DimContract contract = model.check_dims();
        const Tensor probs = forward(model, p33, p15);
        double sum = 0.0;
        for (std::size_t i = 0; i < 5; ++i) sum += probs[i];
        const bool arch_ok =
            contract.flat_features == 1152 && probs.size() == 5 && std::abs(sum - 1.0) < 1e-9;
        if (!arch_ok) ok = false;
        os << arch_name(arch) << (arch_ok ? " ok" : " FAILED") << " ";
    }
    detail = os.str() + "(4x33x33 + 4x15x15 -> 5 probabilities, 1152 flat features)";
    return ok;
}

/// Metric identities vs the counting oracle on 1000 random map pairs.
bool criterion4(std::string& detail) {
    Rng rng(2025);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        LabelMap pred(1, 32, 32), truth(1, 32, 32);
        for (auto& v : pred.labels) v = static_cast<std::uint8_t>(rng.below(5));
        for (auto& v : truth.labels) v = static_cast<std::uint8_t>(rng.below(5));
        const SegReport rep = evaluate(pred, truth);
        for (const RegionSpec& spec : eval_regions()) {
            const testutil::Counts c = testutil::count_region(pred, truth, spec.member_labels);
            const RegionReport& r = rep.region(spec.name);
            if (r.tp != c.tp || r.fp != c.fp || r.tn != c.tn || r.fn != c.fn) {
                detail = "confusion counts diverged from the oracle";
                return false;
            }
            const auto total = static_cast<double>(2 * c.tp + c.fp + c.fn);
            const double dice = total > 0 ? 2.0 * static_cast<double>(c.tp) / total : 1.0;
            const double sens =
                c.tp + c.fn > 0
                    ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn)
                    : 1.0;
            const double spc =
                static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp);
            worst = std::max({worst, std::abs(dice - r.dice), std::abs(sens - r.sensitivity),
                              std::abs(spc - r.specificity)});
        }
        // region monotonicity as pixel sets, both maps
        for (const LabelMap* m : {&pred, &truth}) {
            for (std::uint8_t v : m->labels) {
                const bool enh = eval_regions()[2].contains(v);
                const bool core = eval_regions()[1].contains(v);
                const bool complete = eval_regions()[0].contains(v);
                if ((enh && !core) || (core && !complete)) {
                    detail = "region monotonicity violated";
                    return false;
                }
            }
        }
    }
    std::ostringstream os;
    os << "1000 random 32x32 pairs, all three regions: max |metric - oracle| = " << worst;
    detail = os.str();
    return worst <= 1e-12;
}

/// Nesterov matches the scalar reference and beats/ties classical.
bool criterion5(std::string& detail) {
    const double lr = 0.1, mu = 0.9;
    double x_ref = 1.0, v_ref = 0.0, worst = 0.0;
    Tensor theta({1}, 1.0);
    Tensor grad({1});
    std::vector<ParamRef> params{{"x", &theta, &grad, true}};
    Sgd nag(SgdMode::nesterov, mu);
    for (int step = 0; step < 300; ++step) {
        nag.begin_step(params);
        grad[0] = 2.0 * theta[0];
        nag.apply_step(params, lr);
        const double g = 2.0 * (x_ref + mu * v_ref);
        v_ref = mu * v_ref - lr * g;
        x_ref += v_ref;
        worst = std::max(worst, std::abs(theta[0] - x_ref));
    }

    auto steps_to = [&](SgdMode mode) {
        Tensor x({1}, 1.0);
        Tensor g({1});
        std::vector<ParamRef> p{{"x", &x, &g, true}};
        Sgd sgd(mode, mu);
        for (int step = 1; step <= 5000; ++step) {
            sgd.begin_step(p);
            g[0] = 2.0 * x[0];
            sgd.apply_step(p, lr);
            if (std::abs(x[0]) < 1e-3) return step;
        }
        return 5001;
    };
    const int nag_steps = steps_to(SgdMode::nesterov);
    const int cm_steps = steps_to(SgdMode::classical);
    std::ostringstream os;
    os << "trajectory max deviation " << worst << "; |x|<1e-3 in " << nag_steps
       << " nesterov vs " << cm_steps << " classical steps";
    detail = os.str();
    return worst < 1e-12 && nag_steps <= cm_steps && nag_steps < 5001;
}

/// Dropout expectation and batch-norm standardization statistics.
bool criterion6(std::string& detail) {
    Rng rng(31);
    DropoutLayer drop(0.5);
    Tensor unit({1, 1, 10, 10}, 1.0);
    double sum = 0.0;
    std::size_t n = 0;
    for (int trial = 0; trial < 1000; ++trial) { // 1e5 masked elements
        const Tensor out = drop.forward({&unit}, Mode::train, &rng);
        for (std::size_t i = 0; i < out.size(); ++i) sum += out[i];
        n += unit.size();
    }
    const Tensor infer_out = drop.forward({&unit}, Mode::infer, nullptr);
    const double mean = sum / static_cast<double>(n);
    const double drop_err = std::abs(mean - infer_out[0]);

    BatchNormLayer bn(3);
    Tensor x({16, 3, 5, 5});
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = 5.0 + 10.0 * rng.gaussian(1.0);
    const Tensor out = bn.forward({&x}, Mode::train, nullptr); // scale 1, shift 0
    double worst_mean = 0.0, worst_var = 0.0;
    const std::size_t B = 16, C = 3, HW = 25;
    for (std::size_t c = 0; c < C; ++c) {
        double m = 0.0, v = 0.0;
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < HW; ++i) m += out[(b * C + c) * HW + i];
        m /= static_cast<double>(B * HW);
        for (std::size_t b = 0; b < B; ++b)
            for (std::size_t i = 0; i < HW; ++i) {
                const double d = out[(b * C + c) * HW + i] - m;
                v += d * d;
            }
        v /= static_cast<double>(B * HW);
        worst_mean = std::max(worst_mean, std::abs(m));
        worst_var = std::max(worst_var, std::abs(v - 1.0));
    }
    std::ostringstream os;
    os << "dropout train-mode mean off by " << drop_err << " (tol 0.02); batchnorm pre-scale "
       << "stats |mean| " << worst_mean << ", |var-1| " << worst_var << " (tol 1e-6)";
    detail = os.str();
    return drop_err < 0.02 && worst_mean < 1e-6 && worst_var < 1e-6;
}

/// Two-phase freeze: non-output tensors bit-identical; weight table exact.
bool criterion7(std::string& detail) {
    std::vector<VolumeSet> vols;
    for (int i = 0; i < 2; ++i)
        vols.push_back(generate_phantom(500 + i, 24, 40, 40, TumorSpec{8.0}));

    ModelConfig mc;
    mc.width_scale = 0.08;
    TrainConfig tc;
    tc.phase1_patches = 120;
    tc.phase1_epochs = 1;
    tc.phase2_patches = 60;
    tc.phase2_epochs = 2;
    tc.batch_size = 16;
    tc.val_patches = 1;
    tc.lr_span = 3;
    tc.seed = 77;

    Rng ra(3);
    NexusModel phase1_only = build_model(Arch::LN, mc, ra);
    TrainConfig p1 = tc;
    p1.phase2_epochs = 0;
    train(phase1_only, vols, {}, p1);

    Rng rb(3);
    NexusModel two_phase = build_model(Arch::LN, mc, rb);
    train(two_phase, vols, {}, tc);

    bool frozen_ok = true, output_moved = false;
    for (std::size_t i = 0; i < two_phase.registry().size(); ++i) {
        const auto& ea = phase1_only.registry()[i];
        const auto& eb = two_phase.registry()[i];
        if (eb.output_layer) {
            if (!(*ea.ref.value == *eb.ref.value)) output_moved = true;
        } else if (!(*ea.ref.value == *eb.ref.value)) {
            frozen_ok = false;
        }
    }

    // weight table 8/1/2/1/1 applied exactly; all-ones equals unweighted
    Tensor uniform({1, 5}, 0.2);
    LossConfig w{{8.0, 1.0, 2.0, 1.0, 1.0}};
    const bool w8 = nll_loss(uniform, {0}, w).loss == 8.0 * nll_loss(uniform, {0}).loss;
    const bool w2 = nll_loss(uniform, {2}, w).loss == 2.0 * nll_loss(uniform, {2}).loss;
    const bool w1 = nll_loss(uniform, {1}, w).loss == nll_loss(uniform, {1}).loss &&
                    nll_loss(uniform, {3}, w).loss == nll_loss(uniform, {3}).loss &&
                    nll_loss(uniform, {4}, w).loss == nll_loss(uniform, {4}).loss;
    LossConfig ones{{1.0, 1.0, 1.0, 1.0, 1.0}};
    Tensor batch({4, 5}, 0.2);
    const bool ctrl =
        nll_loss(batch, {0, 1, 2, 3}, ones).loss == nll_loss(batch, {0, 1, 2, 3}).loss;

    std::ostringstream os;
    os << (frozen_ok ? "non-output parameters bit-identical after phase 2"
                     : "non-output parameters CHANGED during phase 2")
       << "; output layer " << (output_moved ? "updated" : "DID NOT MOVE")
       << "; weights {0:8,2:2,1/3/4:1} exact: " << (w8 && w2 && w1 ? "yes" : "no")
       << "; all-ones control exact: " << (ctrl ? "yes" : "no");
    detail = os.str();
    return frozen_ok && output_moved && w8 && w2 && w1 && ctrl;
}

/// Desk-scale end-to-end training and evaluation of the LN architecture.
bool criterion8(std::string& detail) {
    const auto t0 = Clock::now();

    TumorSpec spec;
    spec.radius = 10.0;
    std::vector<VolumeSet> train_vols, held_out;
    for (int i = 0; i < 8; ++i)
        train_vols.push_back(generate_phantom(9000 + i, 40, 56, 56, spec));
    for (int i = 0; i < 2; ++i)
        held_out.push_back(generate_phantom(9100 + i, 40, 56, 56, spec));
    const std::vector<VolumeSet> val_vols = {generate_phantom(9200, 40, 56, 56, spec)};

    TrainConfig tc;
    tc.desk_scale = 0.05; // 10000 phase-1 patches, 1500 phase-2 patches
    tc.phase1_epochs = 3;
    tc.phase2_epochs = 2;
    tc.batch_size = 128;
    tc.val_patches = 200;
    tc.seed = 11;

    Rng rng(11);
    NexusModel model = build_model(Arch::LN, ModelConfig{}, rng);
    const TrainLog log = train(model, train_vols, val_vols, tc);

    double dice_sum = 0.0, spec_sum = 0.0;
    std::ostringstream per_vol;
    for (const VolumeSet& vol : held_out) {
        const LabelMap pred = morph_cleanup(segment_volume(model, vol));
        const SegReport rep = evaluate(pred, *vol.labels);
        const RegionReport& complete = rep.region("complete");
        dice_sum += complete.dice;
        spec_sum += complete.specificity;
        per_vol << " [dice " << complete.dice << " spec " << complete.specificity << "]";
    }
    const double dice = dice_sum / 2.0, specificity = spec_sum / 2.0;
    const double minutes = seconds_since(t0) / 60.0;

    std::ostringstream os;
    os << "LN on 8 train + 2 held-out phantoms (10k/3 + 1.5k/2): complete dice " << dice
       << " (>= 0.80), specificity " << specificity << " (>= 0.90), " << minutes
       << " min wall (<= 30 on a 4-core desktop);" << per_vol.str() << "; final val loss "
       << (log.rows.empty() ? 0.0 : log.rows.back().val_loss);
    detail = os.str();
    return dice >= 0.80 && specificity >= 0.90 && minutes <= 30.0;
}

/// Two-phase training does not hurt complete-region specificity (trend),
/// at reduced scale: 5 seeded repetitions, central-slice evaluation.
bool criterion9(std::string& detail) {
    int wins = 0;
    std::ostringstream os;
    for (int rep = 0; rep < 5; ++rep) {
        const std::uint64_t seed = 1300 + 17 * static_cast<std::uint64_t>(rep);
        TumorSpec spec;
        spec.radius = 8.0;
        std::vector<VolumeSet> train_vols, held_out;
        for (int i = 0; i < 8; ++i)
            train_vols.push_back(generate_phantom(seed * 100 + i, 28, 44, 44, spec));
        for (int i = 0; i < 2; ++i)
            held_out.push_back(generate_phantom(seed * 100 + 50 + i, 28, 44, 44, spec));

        ModelConfig mc;
        mc.width_scale = 0.25;
        TrainConfig tc;
        tc.phase1_patches = 2000;
        tc.phase1_epochs = 2;
        tc.phase2_patches = 600;
        tc.phase2_epochs = 1;
        tc.batch_size = 64;
        tc.val_patches = 1;
        tc.lr_span = 3;
        tc.seed = seed;

        Rng rng(seed);
        NexusModel model = build_model(Arch::LN, mc, rng);

        TrainConfig p1 = tc;
        p1.phase2_epochs = 0;
        train(model, train_vols, {}, p1);

        auto central_specificity = [&](NexusModel& m) {
            double total = 0.0;
            for (const VolumeSet& vol : held_out) {
                const std::size_t mid = vol.depth() / 2;
                const LabelMap pred =
                    morph_cleanup(segment_slices(m, vol, mid - 2, mid + 2));
                LabelMap truth(*vol.labels);
                // compare on the evaluated slices only
                for (std::size_t s = 0; s < truth.depth; ++s) {
                    if (s >= mid - 2 && s < mid + 2) continue;
                    for (std::size_t r = 0; r < truth.height; ++r)
                        for (std::size_t c = 0; c < truth.width; ++c) truth.at(s, r, c) = 0;
                }
                total += evaluate(pred, truth).region("complete").specificity;
            }
            return total / 2.0;
        };

        const double spec_phase1 = central_specificity(model);

        TrainConfig p2 = tc;
        p2.phase1_epochs = 0;
        p2.lr_start = 1e-3; // continuation: already-decayed rate
        p2.lr_end = 1e-4;
        p2.lr_span = 2;
        train(model, train_vols, {}, p2); // phase 2 continues on the same model

        const double spec_two_phase = central_specificity(model);
        const bool win = spec_phase1 <= spec_two_phase + 1e-12;
        wins += win ? 1 : 0;
        os << " [" << spec_phase1 << (win ? " <= " : " > ") << spec_two_phase << "]";
    }
    detail = "phase-1-only vs two-phase complete-region specificity, 5 seeds:" + os.str() +
             " -> " + std::to_string(wins) + "/5 non-decreasing (need >= 4)";
    return wins >= 4;
}

/// Morphology exactness per the direct oracle.
bool criterion10(std::string& detail) {
    // isolated pixel removed by opening (and by the full cleanup)
    morph::Mask lone(9 * 9, 0);
    lone[4 * 9 + 4] = 1;
    bool isolated_ok = true;
    for (std::uint8_t v : morph::open(lone, 9, 9)) isolated_ok = isolated_ok && v == 0;
    LabelMap lone_map(1, 9, 9);
    lone_map.at(0, 4, 4) = 3;
    for (std::uint8_t v : morph_cleanup(lone_map).labels) isolated_ok = isolated_ok && v == 0;

    // single-pixel interior hole filled by closing, exactly
    morph::Mask holed(11 * 11, 0);
    for (std::size_t r = 3; r < 8; ++r)
        for (std::size_t c = 3; c < 8; ++c) holed[r * 11 + c] = 1;
    holed[5 * 11 + 5] = 0;
    const morph::Mask closed = morph::close(holed, 11, 11);
    bool hole_ok = true;
    for (std::size_t r = 0; r < 11; ++r)
        for (std::size_t c = 0; c < 11; ++c)
            hole_ok = hole_ok &&
                      closed[r * 11 + c] == ((r >= 3 && r < 8 && c >= 3 && c < 8) ? 1 : 0);

    // solid 10x10 block unchanged through the full open+close cleanup
    LabelMap block(1, 16, 16);
    for (std::size_t r = 3; r < 13; ++r)
        for (std::size_t c = 3; c < 13; ++c) block.at(0, r, c) = 2;
    const bool block_ok = morph_cleanup(block).labels == block.labels;

    // and the operators agree with the offset-list oracle on random masks
    Rng rng(55);
    bool oracle_ok = true;
    for (int trial = 0; trial < 20; ++trial) {
        morph::Mask m(12 * 12, 0);
        for (auto& v : m) v = rng.below(3) == 0 ? 1 : 0;
        oracle_ok = oracle_ok && morph::open(m, 12, 12) == testutil::oracle_open(m, 12, 12) &&
                    morph::close(m, 12, 12) == testutil::oracle_close(m, 12, 12);
    }

    std::ostringstream os;
    os << "isolated pixel removed: " << (isolated_ok ? "yes" : "NO")
       << "; interior hole filled exactly: " << (hole_ok ? "yes" : "NO")
       << "; solid 10x10 unchanged: " << (block_ok ? "yes" : "NO")
       << "; oracle agreement: " << (oracle_ok ? "yes" : "NO");
    detail = os.str();
    return isolated_ok && hole_ok && block_ok && oracle_ok;
}

/// Byte-identical runs through the CLI: checkpoints, label maps, reports.
bool criterion11(std::string& detail) {
    const fs::path dir = g_tmp / "determinism";
    fs::remove_all(dir);
    fs::create_directories(dir);

    const std::string cfg_path = (dir / "run.cfg").string();
    {
        std::ofstream cfg(cfg_path);
        cfg << "phase1.patches = 200\nphase1.epochs = 1\nphase2.patches = 80\n"
               "phase2.epochs = 1\nbatch_size = 16\nval_patches = 20\nseed = 99\n"
               "model.width_scale = 0.08\nthreads = 1\n";
    }

    for (const char* run : {"r1", "r2"}) {
        const std::string d = (dir / run).string();
        if (run_cli("synth --out " + d + " --seed 40 --count 3 --size 24,40,40") != 0 ||
            run_cli("train --arch LN --data " + d + " --config " + cfg_path + " --out " + d +
                    "/m.ckpt --threads 1") != 0 ||
            run_cli("segment --ckpt " + d + "/m.ckpt --in " + d + "/vol_002.nxv --out " + d +
                    "/pred.nxv --config " + cfg_path + " --workers 1") != 0 ||
            run_cli("evaluate --pred " + d + "/pred.nxv --truth " + d + "/vol_002.nxv --out " +
                    d + "/report.csv --workers 1") != 0) {
            detail = "pipeline run failed in " + d;
            return false;
        }
    }

    const bool synth_ok = file_bytes(dir / "r1" / "vol_000.nxv") ==
                          file_bytes(dir / "r2" / "vol_000.nxv");
    const bool ckpt_ok =
        file_bytes(dir / "r1" / "m.ckpt") == file_bytes(dir / "r2" / "m.ckpt");
    const bool seg_ok =
        file_bytes(dir / "r1" / "pred.nxv") == file_bytes(dir / "r2" / "pred.nxv");
    const bool csv_ok =
        file_bytes(dir / "r1" / "report.csv") == file_bytes(dir / "r2" / "report.csv");

    std::ostringstream os;
    os << "fixed seed, two CLI runs: phantoms " << (synth_ok ? "identical" : "DIFFER")
       << ", checkpoints " << (ckpt_ok ? "identical" : "DIFFER") << ", label maps "
       << (seg_ok ? "identical" : "DIFFER") << ", report CSVs "
       << (csv_ok ? "identical" : "DIFFER");
    detail = os.str();
    return synth_ok && ckpt_ok && seg_ok && csv_ok;
}

} // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--cli" && i + 1 < argc) {
            g_cli = argv[++i];
        } else if (arg == "--tmp" && i + 1 < argc) {
            g_tmp = argv[++i];
        } else if (arg == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            std::string item;
            while (std::getline(ss, item, ',')) only.insert(std::stoi(item));
        } else {
            std::cerr << "usage: nexus_acceptance [--cli PATH] [--tmp DIR] [--only 1,2,...]\n";
            return 64;
        }
    }
    if (g_tmp.empty()) g_tmp = fs::temp_directory_path() / "nexus_acceptance";
    fs::create_directories(g_tmp);

    struct Criterion {
        int id;
        const char* title;
        bool (*fn)(std::string&);
    };
    const Criterion criteria[] = {
        {1, "full-scale paper numbers out of scope", criterion1},
        {2, "layer gradient suite vs finite differences", criterion2},
        {3, "dimension contract of all five architectures", criterion3},
        {4, "metrics match the counting oracle", criterion4},
        {5, "nesterov optimizer vs scalar reference", criterion5},
        {6, "dropout expectation and batch-norm statistics", criterion6},
        {7, "two-phase freeze and loss weighting", criterion7},
        {8, "desk-scale end-to-end learning", criterion8},
        {9, "two-phase specificity trend", criterion9},
        {10, "morphology exactness", criterion10},
        {11, "byte-identical seeded runs", criterion11},
    };

    int failures = 0;
    for (const Criterion& c : criteria) {
        if (!only.empty() && only.count(c.id) == 0) continue;
        std::string detail;
        bool pass = false;
        const auto t0 = Clock::now();
        try {
            pass = c.fn(detail);
        } catch (const std::exception& e) {
            detail = std::string("exception: ") + e.what();
        }
        std::printf("criterion %2d: %s | %s | %s (%.1f s)\n", c.id, pass ? "PASS" : "FAIL",
                    c.title, detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
        if (!pass) ++failures;
    }
    if (failures) std::printf("%d criterion(s) FAILED\n", failures);
    return failures;
}
