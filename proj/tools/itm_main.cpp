// Command-line frontend: tone mapping, inversion, virtual-camera
// synthesis, dataset generation, training, prediction, and scoring.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "itm/camera.hpp"
#include "itm/dataset.hpp"
#include "itm/errors.hpp"
#include "itm/image.hpp"
#include "itm/io/pfm.hpp"
#include "itm/io/png_io.hpp"
#include "itm/io/rgbe.hpp"
#include "itm/io/weights.hpp"
#include "itm/metrics.hpp"
#include "itm/reinhard.hpp"
#include "itm/unet.hpp"

namespace {

constexpr int kExitIo = 2;        // unreadable, unparsable, or corrupt files
constexpr int kExitDomain = 3;    // invalid values or incompatible shapes
constexpr int kExitScale = 4;     // absolute scale unrecoverable
constexpr int kExitInternal = 5;  // unexpected failure

bool log_enabled() {
    const char* v = std::getenv("ITM_LOG_LEVEL");
    return !(v && std::string(v) == "quiet");
}

void log_line(const std::string& s) {
    if (log_enabled()) std::cout << s << "\n";
}

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string ext_of(const std::string& path) {
    std::string e = std::filesystem::path(path).extension().string();
    std::transform(e.begin(), e.end(), e.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return e;
}

itm::RadianceMap read_hdr_any(const std::string& path) {
    const std::string e = ext_of(path);
    if (e == ".hdr" || e == ".rgbe") return itm::read_hdr(path);
    if (e == ".pfm") return itm::read_pfm_radiance(path);
    throw itm::DomainError("unsupported HDR input '" + path + "' (expected .hdr, .rgbe or .pfm)");
}

void write_hdr_any(const std::string& path, const itm::RadianceMap& img) {
    const std::string e = ext_of(path);
    if (e == ".hdr" || e == ".rgbe") {
        itm::write_hdr(path, img);
    } else if (e == ".pfm") {
        itm::write_pfm(path, img);
    } else {
        throw itm::DomainError("unsupported HDR output '" + path +
                               "' (expected .hdr, .rgbe or .pfm)");
    }
}

itm::LdrImage read_ldr_any(const std::string& path) {
    const std::string e = ext_of(path);
    if (e == ".png") return itm::read_png(path);
    if (e == ".pfm") return itm::read_pfm_ldr(path);
    throw itm::DomainError("unsupported LDR input '" + path + "' (expected .png or .pfm)");
}

void write_ldr_any(const std::string& path, const itm::LdrImage& img) {
    const std::string e = ext_of(path);
    if (e == ".png") {
        itm::write_png(path, img);
    } else if (e == ".pfm") {
        itm::write_pfm(path, img);
    } else {
        throw itm::DomainError("unsupported LDR output '" + path + "' (expected .png or .pfm)");
    }
}

std::vector<std::string> list_files_with_ext(const std::string& dir,
                                             const std::vector<std::string>& exts) {
    std::vector<std::string> out;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string e = ext_of(entry.path().string());
        for (const auto& want : exts)
            if (e == want) {
                out.push_back(entry.path().string());
                break;
            }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::pair<int, int> parse_scale(const std::string& s) {
    int num = 0, den = 1;
    const auto slash = s.find('/');
    try {
        if (slash == std::string::npos) {
            num = std::stoi(s);
        } else {
            num = std::stoi(s.substr(0, slash));
            den = std::stoi(s.substr(slash + 1));
        }
    } catch (const std::exception&) {
        throw itm::DomainError("bad --scale '" + s + "' (expected N or N/D)");
    }
    if (num < 1 || den < 1)
        throw itm::DomainError("bad --scale '" + s + "' (numerator and denominator must be >= 1)");
    return {num, den};
}

std::string quality_report_text(const itm::QualityReport& rep) {
    std::string s;
    s += "pu_msssim=" + fmt_g(rep.pu_msssim) + "\n";
    s += "scales_used=" + std::to_string(rep.scales_used) + "\n";
    s += "reduced_scales=" + std::to_string(rep.reduced_scales ? 1 : 0) + "\n";
    for (std::size_t i = 0; i < rep.per_scale.size(); ++i)
        s += "scale_" + std::to_string(i + 1) + "=" + fmt_g(rep.per_scale[i]) + "\n";
    s += "pred_min=" + fmt_g(rep.pred.min) + "\n";
    s += "pred_max=" + fmt_g(rep.pred.max) + "\n";
    s += "pred_mean=" + fmt_g(rep.pred.mean) + "\n";
    s += "ref_min=" + fmt_g(rep.ref.min) + "\n";
    s += "ref_max=" + fmt_g(rep.ref.max) + "\n";
    s += "ref_mean=" + fmt_g(rep.ref.mean) + "\n";
    return s;
}

// one positive rejection-resampled draw, matching the camera module's
// parameter sampling
double draw_positive_normal(itm::Rng& rng, double mean, double stddev) {
    double v;
    do {
        v = rng.normal(mean, stddev);
    } while (v <= 0.0);
    return v;
}

struct Args {
    std::string in1, in2, out;
    double a = 0.18;
    std::optional<double> g_override;
    std::optional<double> v, eta, gamma;
    std::optional<std::uint64_t> seed;
    int pairs_per_image = 8;
    int size = 64;
    int epochs = 1;
    std::string scale = "1/8";
    bool quantize = false;
    std::string report_path;
};

int cmd_tonemap(const Args& a) {
    log_line("event=start cmd=tonemap input=" + a.in1 + " output=" + a.out);
    const itm::RadianceMap hdr = read_hdr_any(a.in1);
    auto [ldr, params] = itm::tonemap_forward(hdr, a.a);
    write_ldr_any(a.out, ldr);
    log_line("event=done cmd=tonemap g=" + fmt_g(params.G) + " a=" + fmt_g(params.a) +
             " width=" + std::to_string(ldr.width) + " height=" + std::to_string(ldr.height));
    return 0;
}

int cmd_itm(const Args& a) {
    log_line("event=start cmd=itm input=" + a.in1 + " output=" + a.out);
    const itm::LdrImage ldr = read_ldr_any(a.in1);
    const itm::InverseResult res = itm::inverse_tonemap_detail(ldr, a.a, itm::kDefaultEps,
                                                               a.g_override);
    write_hdr_any(a.out, res.hdr);
    log_line("event=done cmd=itm g=" + fmt_g(res.params.G) +
             " g_overridden=" + std::to_string(res.g_overridden ? 1 : 0) +
             " zero_pixels=" + std::to_string(res.partition.n_zero) + "/" +
             std::to_string(res.partition.n_total));
    return 0;
}

int cmd_synth_ldr(const Args& a) {
    log_line("event=start cmd=synth-ldr input=" + a.in1 + " output=" + a.out);
    if ((!a.v || !a.eta || !a.gamma) && !a.seed)
        throw itm::DomainError(
            "synth-ldr: --seed is required unless --v, --eta, and --gamma are all given");
    const itm::RadianceMap hdr = read_hdr_any(a.in1);
    itm::Rng rng(a.seed.value_or(0));
    const double v = a.v ? *a.v : rng.uniform(-4.0, 4.0);
    itm::CrfParams crf;
    crf.eta = a.eta ? *a.eta : draw_positive_normal(rng, 0.6, std::sqrt(0.1));
    crf.gamma = a.gamma ? *a.gamma : draw_positive_normal(rng, 0.9, std::sqrt(0.1));
    crf.validate();
    const itm::LumaMap L = itm::luminance(hdr);
    const itm::LumaMap X = itm::sample_exposure(hdr, v, itm::kDefaultEps);
    const itm::LumaMap xl = itm::apply_crf(X, crf);
    const itm::LdrImage out = itm::rescale_colors<itm::LdrImage>(hdr, L, xl);
    write_ldr_any(a.out, out);
    log_line("event=done cmd=synth-ldr v=" + fmt_g(v) + " eta=" + fmt_g(crf.eta) +
             " gamma=" + fmt_g(crf.gamma));
    return 0;
}

int cmd_make_dataset(const Args& a) {
    log_line("event=start cmd=make-dataset input=" + a.in1 + " output=" + a.out +
             " pairs_per_image=" + std::to_string(a.pairs_per_image) +
             " size=" + std::to_string(a.size) + " seed=" + std::to_string(*a.seed));
    const auto paths = list_files_with_ext(a.in1, {".hdr", ".rgbe", ".pfm"});
    if (paths.empty())
        throw itm::DomainError("make-dataset: no .hdr/.rgbe/.pfm files in '" + a.in1 + "'");
    std::vector<itm::RadianceMap> images;
    images.reserve(paths.size());
    for (const auto& p : paths) images.push_back(read_hdr_any(p));
    const int written = itm::write_dataset(paths, images, a.out, a.pairs_per_image, a.size,
                                           *a.seed, itm::kDefaultEps, a.quantize);
    log_line("event=done cmd=make-dataset sources=" + std::to_string(paths.size()) +
             " pairs=" + std::to_string(written));
    return 0;
}

bool is_dataset_dir(const std::string& dir) {
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        if (!entry.is_regular_file()) continue;
        const std::string name = entry.path().filename().string();
        if (name.size() > 9 && name.substr(name.size() - 9) == "_meta.txt") return true;
    }
    return false;
}

int cmd_train(const Args& a) {
    const auto [num, den] = parse_scale(a.scale);
    itm::UNetConfig cfg;
    cfg.input_size = a.size;
    cfg.scale_num = num;
    cfg.scale_den = den;
    cfg.validate();
    itm::TrainHyper hy;
    hy.epochs = a.epochs;
    hy.seed = *a.seed;
    log_line("event=start cmd=train input=" + a.in1 + " output=" + a.out + " epochs=" +
             std::to_string(a.epochs) + " size=" + std::to_string(a.size) + " scale=" + a.scale +
             " seed=" + std::to_string(*a.seed));
    itm::UNet<float> net(cfg);
    itm::TrainReport report;
    if (is_dataset_dir(a.in1)) {
        auto pairs = itm::load_dataset(a.in1);
        if (pairs.empty()) throw itm::DomainError("train: dataset at '" + a.in1 + "' is empty");
        if (pairs[0].first.width != cfg.input_size)
            throw itm::ConfigMismatchError(
                "train: dataset pairs are " + std::to_string(pairs[0].first.width) + "px but --size is " +
                std::to_string(cfg.input_size));
        log_line("event=data cmd=train mode=dataset pairs=" + std::to_string(pairs.size()));
        itm::Rng init_rng = itm::Rng(hy.seed).fork(0);
        net = itm::UNet<float>::build(cfg, init_rng);
        report = itm::train_on_pairs(net, pairs, hy);
    } else {
        const auto paths = list_files_with_ext(a.in1, {".hdr", ".rgbe", ".pfm"});
        if (paths.empty())
            throw itm::DomainError("train: no dataset pairs or .hdr/.rgbe/.pfm files in '" +
                                   a.in1 + "'");
        std::vector<itm::RadianceMap> images;
        images.reserve(paths.size());
        for (const auto& p : paths) images.push_back(read_hdr_any(p));
        log_line("event=data cmd=train mode=hdr sources=" + std::to_string(images.size()));
        auto [trained, rep] = itm::train_new<float>(images, cfg, hy);
        net = std::move(trained);
        report = std::move(rep);
    }
    itm::save_weights(a.out, net);
    std::string losses;
    for (std::size_t i = 0; i < report.epoch_loss.size(); ++i) {
        if (i) losses += ",";
        losses += fmt_g(report.epoch_loss[i]);
    }
    log_line("event=done cmd=train iterations=" + std::to_string(report.iterations) +
             " wall_seconds=" + fmt_g(report.wall_seconds) + " epoch_loss=" + losses +
             " params=" + std::to_string(net.param_count()));
    return 0;
}

int cmd_predict(const Args& a) {
    log_line("event=start cmd=predict weights=" + a.in1 + " input=" + a.in2 + " output=" + a.out);
    itm::UNet<float> net = itm::load_weights<float>(a.in1);
    const itm::LdrImage x = read_ldr_any(a.in2);
    const auto xt = itm::to_tensor<float>(x);
    const auto yt = net.forward(xt, false);
    const itm::LdrImage y_hat = itm::from_tensor(yt);
    const itm::InverseResult res = itm::inverse_tonemap_detail(
        y_hat, 0.18, itm::kDefaultEps, std::nullopt, itm::kPredictZeroThreshold);
    write_hdr_any(a.out, res.hdr);
    log_line("event=done cmd=predict g=" + fmt_g(res.params.G) +
             " zero_pixels=" + std::to_string(res.partition.n_zero) + "/" +
             std::to_string(res.partition.n_total));
    return 0;
}

int cmd_eval(const Args& a) {
    log_line("event=start cmd=eval pred=" + a.in1 + " ref=" + a.in2);
    const itm::RadianceMap pred = read_hdr_any(a.in1);
    const itm::RadianceMap ref = read_hdr_any(a.in2);
    const itm::QualityReport rep = itm::evaluate_hdr(pred, ref);
    const std::string text = quality_report_text(rep);
    std::cout << text;
    if (!a.report_path.empty())
        itm::detail::write_file_bytes(a.report_path,
                                      std::vector<std::uint8_t>(text.begin(), text.end()));
    log_line("event=done cmd=eval pu_msssim=" + fmt_g(rep.pu_msssim));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Inverse tone mapping toolkit: global tone-mapping with exact inversion, "
                 "virtual-camera LDR synthesis, dataset generation, network training, "
                 "prediction, and perceptual scoring."};
    app.require_subcommand(1);
    Args args;

    auto* tonemap = app.add_subcommand(
        "tonemap", "Tone-map an HDR image (.hdr/.rgbe/.pfm) to an LDR image (.png/.pfm)");
    tonemap->add_option("hdr", args.in1, "input HDR image")->required();
    tonemap->add_option("ldr-out", args.out, "output LDR image")->required();
    tonemap->add_option("--a", args.a, "key value mapping the geometric mean to middle gray")
        ->capture_default_str();

    auto* inv = app.add_subcommand(
        "itm", "Invert a tone-mapped LDR image (.png/.pfm) back to HDR (.hdr/.rgbe/.pfm)");
    inv->add_option("ldr", args.in1, "input LDR image")->required();
    inv->add_option("hdr-out", args.out, "output HDR image")->required();
    inv->add_option("--a", args.a, "key value used when the image was tone-mapped")
        ->capture_default_str();
    inv->add_option("--g-override", args.g_override,
                    "geometric mean to assume when the image has no zero pixels");

    auto* synth = app.add_subcommand(
        "synth-ldr", "Render an HDR image through a randomized virtual camera");
    synth->add_option("hdr", args.in1, "input HDR image")->required();
    synth->add_option("ldr-out", args.out, "output LDR image (.png/.pfm)")->required();
    synth->add_option("--v", args.v, "exposure bias in stops (default: drawn from U[-4, 4])");
    synth->add_option("--eta", args.eta,
                      "response curve eta (default: drawn from N(0.6, 0.1), positive)");
    synth->add_option("--gamma", args.gamma,
                      "response curve gamma (default: drawn from N(0.9, 0.1), positive)");
    synth->add_option("--seed", args.seed, "random seed (required unless v, eta, gamma fixed)");

    auto* mkds = app.add_subcommand("make-dataset",
                                    "Generate training pairs from a directory of HDR images");
    mkds->add_option("hdr-dir", args.in1, "directory of .hdr/.rgbe/.pfm sources")->required();
    mkds->add_option("out-dir", args.out, "output dataset directory")->required();
    mkds->add_option("--pairs-per-image", args.pairs_per_image, "pairs generated per source")
        ->capture_default_str();
    mkds->add_option("--size", args.size, "training patch side in pixels")
        ->capture_default_str();
    mkds->add_option("--seed", args.seed, "random seed")->required();
    mkds->add_flag("--quantize", args.quantize, "store x quantized to 8-bit levels");

    auto* train = app.add_subcommand(
        "train", "Train the network on a dataset directory or directly on HDR sources");
    train->add_option("data", args.in1, "dataset directory (from make-dataset) or HDR directory")
        ->required();
    train->add_option("weights-out", args.out, "output weight container")->required();
    train->add_option("--epochs", args.epochs, "training epochs")->capture_default_str();
    train->add_option("--scale", args.scale, "channel width multiplier, N or N/D (1 = full)")
        ->capture_default_str();
    train->add_option("--size", args.size, "network input side in pixels")
        ->capture_default_str();
    train->add_option("--seed", args.seed, "random seed")->required();

    auto* predict = app.add_subcommand(
        "predict", "Reconstruct an HDR image from an LDR input with trained weights (a = 0.18)");
    predict->add_option("weights", args.in1, "weight container from train")->required();
    predict->add_option("ldr-in", args.in2, "input LDR image sized to the network")->required();
    predict->add_option("hdr-out", args.out, "output HDR image")->required();

    auto* eval = app.add_subcommand("eval",
                                    "Score a reconstructed HDR image against its reference");
    eval->add_option("pred-hdr", args.in1, "reconstructed HDR image")->required();
    eval->add_option("ref-hdr", args.in2, "reference HDR image")->required();
    eval->add_option("--report", args.report_path, "also write the key=value report to a file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (tonemap->parsed()) return cmd_tonemap(args);
        if (inv->parsed()) return cmd_itm(args);
        if (synth->parsed()) return cmd_synth_ldr(args);
        if (mkds->parsed()) return cmd_make_dataset(args);
        if (train->parsed()) return cmd_train(args);
        if (predict->parsed()) return cmd_predict(args);
        if (eval->parsed()) return cmd_eval(args);
    } catch (const itm::ScaleUnrecoverableError& e) {
        std::cerr << "event=error category=scale-unrecoverable msg=\"" << e.what() << "\"\n"
                  << "hint=\"re-run with --g-override <geometric-mean> to fix the absolute "
                     "scale\"\n";
        return kExitScale;
    } catch (const itm::ParseError& e) {
        std::cerr << "event=error category=parse msg=\"" << e.what() << "\"\n";
        return kExitIo;
    } catch (const itm::IntegrityError& e) {
        std::cerr << "event=error category=integrity msg=\"" << e.what() << "\"\n";
        return kExitIo;
    } catch (const itm::ConfigMismatchError& e) {
        std::cerr << "event=error category=config msg=\"" << e.what() << "\"\n";
        return kExitDomain;
    } catch (const itm::DomainError& e) {
        std::cerr << "event=error category=domain msg=\"" << e.what() << "\"\n";
        return kExitDomain;
    } catch (const itm::DimensionError& e) {
        std::cerr << "event=error category=dimension msg=\"" << e.what() << "\"\n";
        return kExitDomain;
    } catch (const itm::Error& e) {
        std::cerr << "event=error category=io msg=\"" << e.what() << "\"\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "event=error category=internal msg=\"" << e.what() << "\"\n";
        return kExitInternal;
    }
    return kExitInternal;
}
