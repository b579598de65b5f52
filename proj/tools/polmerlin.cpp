#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <locale>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "polm/gradcheck_suite.hpp"
#include "polm/io.hpp"
#include "polm/metrics.hpp"
#include "polm/pipeline.hpp"
#include "polm/speckle.hpp"

namespace fs = std::filesystem;
using namespace polm;

namespace {

std::vector<double> parse_taps(const std::string& csv) {
    std::vector<double> taps;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) taps.push_back(std::stod(tok));
    return taps;
}

metrics::Roi parse_roi(const std::string& csv) {
    int v[4];
    if (std::sscanf(csv.c_str(), "%d,%d,%d,%d", &v[0], &v[1], &v[2], &v[3]) != 4)
        throw std::invalid_argument("--roi expects x,y,w,h");
    return {v[0], v[1], v[2], v[3]};
}

void write_loss_csv(const std::string& path, const std::vector<pipeline::LossRow>& rows) {
    std::ostringstream buf;
    buf.imbue(std::locale::classic());
    buf.precision(12);
    buf << "epoch,step,loss\n";
    for (const auto& r : rows) buf << r.epoch << ',' << r.step << ',' << r.loss << '\n';
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << buf.str();
}

int run_simulate(const std::string& mode, double rhh, double rvv, double rhv, int size,
                 const std::string& clean_path, std::uint64_t shapes_seed, int pols,
                 std::uint64_t seed, const std::string& tkernel, const std::string& out,
                 const std::string& clean_out) {
    PolStack stack;
    Raster clean;
    if (mode == "dualpol") {
        const auto cov = speckle::CovarianceField::constant(size, size, rhh, rvv, rhv);
        stack = speckle::sample_dual_pol(cov, seed);
    } else if (mode == "gamma") {
        if (!clean_path.empty()) {
            clean = io::read_pnm(clean_path);
        } else {
            clean = Raster(pols, size, size);
            for (int p = 0; p < pols; ++p) {
                const Raster shape = pipeline::make_shapes_image(size, size, shapes_seed + p);
                std::copy(shape.data.begin(), shape.data.end(), clean.channel(p));
            }
        }
        stack = speckle::synth_gamma_stack(clean.data, clean.H, clean.W, clean.C, seed);
    } else {
        throw std::invalid_argument("simulate: mode must be dualpol or gamma");
    }
    if (!tkernel.empty()) {
        speckle::SpatialCorrelationKernel kernel;
        kernel.taps = parse_taps(tkernel);
        stack = speckle::apply_spatial_correlation(stack, kernel);
    }
    io::write_pfr(out, stack);
    if (!clean_out.empty() && clean.C > 0) io::write_pfr(clean_out, clean);
    return 0;
}

int run_gradcheck(std::uint64_t seed, double tol) {
    const auto results = check::run_autodiff_suite(seed, tol);
    for (const auto& r : results)
        std::printf("%-40s max_rel_err=%.3e %s\n", r.name.c_str(), r.max_rel_err,
                    r.pass ? "ok" : "FAIL");
    return check::all_pass(results) ? 0 : 1;
}

pipeline::TrainMode parse_mode(const std::string& mode) {
    if (mode == "polmerlin") return pipeline::TrainMode::PolMerlin;
    if (mode == "channel_only") return pipeline::TrainMode::ChannelOnly;
    if (mode == "merlin_single_pol") return pipeline::TrainMode::MerlinSinglePol;
    if (mode == "supervised_mse") return pipeline::TrainMode::SupervisedMse;
    throw std::invalid_argument("unknown training mode: " + mode);
}

std::vector<std::string> sorted_pfr_files(const std::string& dir) {
    std::vector<std::string> paths;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && entry.path().extension() == ".pfr")
            paths.push_back(entry.path().string());
    std::sort(paths.begin(), paths.end());
    if (paths.empty()) throw std::runtime_error(dir + ": no .pfr files found");
    return paths;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-supervised polarimetric despeckling toolkit"};
    app.require_subcommand(1);

    // simulate
    auto* sim = app.add_subcommand("simulate", "Generate speckled stacks");
    std::string sim_mode = "dualpol", sim_clean, sim_tkernel, sim_out, sim_clean_out;
    double rhh = 2.0, rvv = 2.0, rhv = 1.0;
    int sim_size = 128, sim_pols = 1;
    std::uint64_t sim_seed = 0, shapes_seed = 1;
    sim->add_option("--mode", sim_mode, "dualpol or gamma");
    sim->add_option("--rhh", rhh);
    sim->add_option("--rvv", rvv);
    sim->add_option("--rhv", rhv);
    sim->add_option("--size", sim_size, "square image extent");
    sim->add_option("--clean", sim_clean, "clean PGM/PPM input for gamma mode");
    sim->add_option("--shapes-seed", shapes_seed, "procedural clean image seed (gamma mode)");
    sim->add_option("--pols", sim_pols, "pseudo-polarizations for procedural clean images");
    sim->add_option("--seed", sim_seed);
    sim->add_option("--tkernel", sim_tkernel, "comma-separated correlation taps");
    sim->add_option("-o,--out", sim_out)->required();
    sim->add_option("--clean-out", sim_clean_out, "also write the clean raster");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference autodiff checks");
    std::uint64_t gc_seed = 7;
    double gc_tol = 1e-4;
    gc->add_option("--seed", gc_seed);
    gc->add_option("--tol", gc_tol);

    // train
    auto* tr = app.add_subcommand("train", "Train a despeckling model");
    std::string tr_data, tr_clean_dir, tr_mode = "polmerlin", tr_out, tr_log;
    pipeline::TrainConfig tc;
    tr->add_option("--data", tr_data, "directory of .pfr patches")->required();
    tr->add_option("--clean-dir", tr_clean_dir, "clean .pfr patches (supervised mode)");
    tr->add_option("--mode", tr_mode, "polmerlin|channel_only|merlin_single_pol|supervised_mse");
    tr->add_option("--epochs", tc.epochs);
    tr->add_option("--batch", tc.batch);
    tr->add_option("--lr", tc.lr);
    tr->add_option("--lr-final", tc.lr_final,
                   "cosine-anneal the learning rate to this value (< 0 keeps it constant)");
    tr->add_option("--mask-p", tc.mask_p);
    tr->add_option("--seed", tc.seed);
    tr->add_option("--clip-norm", tc.clip_norm, "global gradient-norm clip (<= 0 disables)");
    tr->add_option("--base-width", tc.base_width);
    tr->add_option("--depth", tc.depth);
    tr->add_flag("--alternate-directions", tc.alternate_mask_direction,
                 "alternate the channel-mask direction per step");
    bool shared_spatial = false;
    tr->add_flag("--shared-spatial-mask", shared_spatial,
                 "share one spatial mask across channels");
    tr->add_option("-o,--out", tr_out)->required();
    tr->add_option("--log", tr_log, "loss CSV path");

    // despeckle
    auto* ds = app.add_subcommand("despeckle", "Run inference");
    std::string ds_in, ds_ckpt, ds_out, ds_preview, ds_calib;
    int ds_patch = 64;
    ds->add_option("-i,--input", ds_in)->required();
    ds->add_option("-c,--checkpoint", ds_ckpt)->required();
    ds->add_option("-o,--out", ds_out)->required();
    ds->add_option("--patch", ds_patch);
    ds->add_option("--preview", ds_preview, "PGM preview of log-reflectance (channel 0)");
    ds->add_option("--calib", ds_calib, "'gamma-synthetic' maps r back to clean scale");

    // eval
    auto* ev = app.add_subcommand("eval", "Quantitative evaluation");
    std::string ev_clean, ev_despeckled, ev_noisy, ev_out;
    std::vector<std::string> ev_rois;
    ev->add_option("--clean", ev_clean)->required();
    ev->add_option("--despeckled", ev_despeckled)->required();
    ev->add_option("--noisy", ev_noisy)->required();
    ev->add_option("--roi", ev_rois, "flat region x,y,w,h (repeatable)");
    ev->add_option("-o,--out", ev_out, "metrics CSV (default stdout)");

    // stats
    auto* st = app.add_subcommand("stats", "Empirical cross-covariance of a stack");
    std::string st_in;
    st->add_option("-i,--input", st_in)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (sim->parsed())
            return run_simulate(sim_mode, rhh, rvv, rhv, sim_size, sim_clean, shapes_seed,
                                sim_pols, sim_seed, sim_tkernel, sim_out, sim_clean_out);
        if (gc->parsed()) return run_gradcheck(gc_seed, gc_tol);
        if (tr->parsed()) {
            tc.mode = parse_mode(tr_mode);
            tc.per_channel_mask = !shared_spatial;
            std::vector<PolStack> patches;
            for (const auto& path : sorted_pfr_files(tr_data)) patches.push_back(io::read_pfr(path));
            std::vector<Raster> clean;
            const std::vector<Raster>* clean_ptr = nullptr;
            if (tc.mode == pipeline::TrainMode::SupervisedMse) {
                if (tr_clean_dir.empty())
                    throw std::invalid_argument("supervised_mse needs --clean-dir");
                for (const auto& path : sorted_pfr_files(tr_clean_dir))
                    clean.push_back(io::read_pfr(path));
                clean_ptr = &clean;
            }
            auto result = pipeline::train(patches, tc, clean_ptr);
            io::save_checkpoint(tr_out, result.ckpt);
            if (!tr_log.empty()) write_loss_csv(tr_log, result.log);
            return 0;
        }
        if (ds->parsed()) {
            const auto image = io::read_pfr(ds_in);
            const auto ckpt = io::load_checkpoint(ds_ckpt);
            Raster out = pipeline::despeckle(image, ckpt, ds_patch);
            if (ds_calib == "gamma-synthetic") out = pipeline::calibrate_gamma_synthetic(out);
            else if (!ds_calib.empty())
                throw std::invalid_argument("unknown --calib value: " + ds_calib);
            io::write_pfr(ds_out, out);
            if (!ds_preview.empty()) {
                std::vector<double> logplane(out.plane());
                for (std::size_t i = 0; i < logplane.size(); ++i)
                    logplane[i] = std::log(std::max(out.data[i], 1e-12));
                io::write_pgm_preview(ds_preview, logplane.data(), out.H, out.W);
            }
            return 0;
        }
        if (ev->parsed()) {
            const auto clean = io::read_pfr(ev_clean);
            const auto despeckled = io::read_pfr(ev_despeckled);
            const auto noisy = io::read_pfr(ev_noisy);
            std::vector<metrics::Roi> rois;
            for (const auto& r : ev_rois) rois.push_back(parse_roi(r));
            const auto report = pipeline::evaluate_synthetic(clean, despeckled, noisy, rois);
            if (ev_out.empty()) {
                metrics::write_csv(report, std::cout);
            } else {
                std::ofstream out(ev_out, std::ios::trunc);
                if (!out) throw std::runtime_error(ev_out + ": cannot open for writing");
                metrics::write_csv(report, out);
            }
            return 0;
        }
        if (st->parsed()) {
            const auto stack = io::read_pfr(st_in);
            const auto est = speckle::empirical_cross_covariance(stack);
            std::printf("channel_i,channel_j,covariance,standard_error\n");
            for (int i = 0; i < est.dim; ++i)
                for (int j = 0; j < est.dim; ++j)
                    std::printf("%d,%d,%.10g,%.10g\n", i, j, est.cov_at(i, j), est.se_at(i, j));
            return 0;
        }
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "io error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
