// Command-line front end: one subcommand per pipeline stage.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spectraflake/spectraflake.hpp"

namespace fs = std::filesystem;
using namespace spectraflake;

namespace {

// Printed before any work so every run records what it actually used.
void print_config(const std::string& command, const std::vector<std::pair<std::string, std::string>>& kv) {
    std::cout << "[" << command << "]";
    for (const auto& [k, v] : kv) std::cout << " " << k << "=" << v;
    std::cout << "\n";
}

template <typename T>
std::string str(const T& v) {
    std::ostringstream os;
    os << v;
    return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot create '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("failed writing '" + path.string() + "'");
}

fs::path with_suffix(fs::path p, const std::string& suffix) {
    p += suffix;
    return p;
}

nlohmann::json spectra_to_json(const ReferenceSpectra& refs, const ClassCatalog& catalog,
                               const std::vector<double>& wavelengths) {
    nlohmann::json classes = nlohmann::json::array();
    for (std::size_t i = 0; i < refs.size(); ++i)
        classes.push_back({{"label", refs.labels[i]},
                           {"name", catalog.name(refs.labels[i])},
                           {"pixels", refs.pixel_counts[i]},
                           {"spectrum", refs.spectra[i]}});
    return {{"wavelengths", wavelengths}, {"classes", classes}};
}

std::string spectra_to_csv(const ReferenceSpectra& refs, const ClassCatalog& catalog,
                           const std::vector<double>& wavelengths) {
    std::ostringstream os;
    os << "channel,wavelength";
    for (auto l : refs.labels) os << "," << catalog.name(l);
    os << "\n";
    for (std::size_t c = 0; c < refs.channels(); ++c) {
        os << c << ",";
        if (c < wavelengths.size()) os << wavelengths[c];
        for (const auto& s : refs.spectra) os << "," << s[c];
        os << "\n";
    }
    return os.str();
}

// --- subcommands ---------------------------------------------------------

struct CorrectArgs {
    std::string raw, bright, dark, out;
    double eps = 1e-6;
};

int run_correct(const CorrectArgs& a) {
    print_config("correct", {{"raw", a.raw}, {"bright", a.bright}, {"dark", a.dark}, {"eps", str(a.eps)},
                             {"out", a.out}, {"seed", "none"}});
    const auto profile = make_reference_profile(read_envi(a.bright), read_envi(a.dark));
    auto raw = read_envi(a.raw);
    const auto wl = raw.wavelengths();
    auto result = reflectance_correct(raw, profile, a.eps);
    if (result.cube.wavelengths().empty() && !wl.empty()) result.cube.set_wavelengths(wl);
    write_envi(result.cube, a.out);
    std::cout << "wrote " << a.out << ".hdr (" << result.cube.height() << "x" << result.cube.width() << "x"
              << result.cube.channels() << "), clamped columns: " << result.clamped_columns << "\n";
    return 0;
}

struct SpectraArgs {
    std::string manifest, split = "train", preproc = "none", out;
    std::size_t classes = 5;
    bool no_background = false;
};

int run_spectra(const SpectraArgs& a) {
    print_config("spectra", {{"manifest", a.manifest}, {"split", a.split}, {"preproc", a.preproc},
                             {"classes", str(a.classes)}, {"background", a.no_background ? "no" : "yes"},
                             {"out", a.out}, {"seed", "none"}});
    const auto variant = parse_preproc(a.preproc);
    auto set = load_split(read_manifest(a.manifest), a.split, a.classes);
    if (set.empty()) throw ValidationError("manifest has no '" + a.split + "' entries");
    for (auto& item : set) item.cube = apply(variant, item.cube);
    const auto catalog = ClassCatalog::with_size(a.classes);
    const auto refs = compute_reference_spectra(set, catalog, !a.no_background);
    const auto& wl = set.front().cube.wavelengths();
    write_text(with_suffix(a.out, ".json"), spectra_to_json(refs, catalog, wl).dump(2) + "\n");
    write_text(with_suffix(a.out, ".csv"), spectra_to_csv(refs, catalog, wl));
    std::cout << "wrote " << refs.size() << " reference spectra to " << a.out << ".json and " << a.out << ".csv\n";
    return 0;
}

struct PreprocessArgs {
    std::string in, preproc = "none", out;
};

int run_preprocess(const PreprocessArgs& a) {
    print_config("preprocess", {{"in", a.in}, {"preproc", a.preproc}, {"out", a.out}, {"seed", "none"}});
    std::size_t guarded = 0;
    const auto cube = apply(PreprocKind{parse_preproc(a.preproc)}, read_envi(a.in), &guarded);
    write_envi(cube, a.out);
    std::cout << "wrote " << a.out << ".hdr with " << cube.channels() << " channels";
    if (guarded) std::cout << ", " << guarded << " guarded denominators";
    std::cout << "\n";
    return 0;
}

struct TrainArgs {
    std::string manifest, config, model = "plasticnet", out = "model.sfw1";
    std::optional<std::string> preproc, curve;
    std::optional<std::size_t> epochs, tile, tiles_per_epoch;
    std::optional<double> lr;
    std::optional<std::uint64_t> seed;
    std::size_t classes = 5;
};

int run_train(const TrainArgs& a) {
    TrainConfig cfg;
    if (!a.config.empty()) {
        std::ifstream in(a.config);
        if (!in) throw IoError("cannot open config '" + a.config + "'");
        cfg = parse_train_config(in);
    }
    if (a.preproc) cfg.preproc.variant = parse_preproc(*a.preproc);
    if (a.epochs) cfg.epochs = *a.epochs;
    if (a.tile) cfg.tile_size = *a.tile;
    if (a.tiles_per_epoch) cfg.tiles_per_epoch = *a.tiles_per_epoch;
    if (a.lr) cfg.adam.learning_rate = *a.lr;
    if (a.seed) cfg.seed = *a.seed;
    const auto kind = parse_model_kind(a.model);
    const fs::path curve = a.curve ? fs::path(*a.curve) : with_suffix(a.out, ".curve.csv");
    std::cout << "[train] manifest=" << a.manifest << " model=" << to_string(kind) << " classes=" << a.classes
              << " out=" << a.out << " curve=" << curve.string() << "\n"
              << format_train_config(cfg);

    const auto entries = read_manifest(a.manifest);
    const auto train_set = load_split(entries, "train", a.classes);
    const auto val_set = load_split(entries, "val", a.classes);
    if (train_set.empty()) throw ValidationError("manifest has no 'train' entries");
    const std::size_t channels = output_channels(cfg.preproc.variant, train_set.front().cube.channels());

    std::optional<ReferenceSpectra> refs;
    if (kind == ModelKind::samnet || kind == ModelKind::samnet3) {
        std::vector<LabeledCube> prepared;
        for (const auto& item : train_set) prepared.push_back({apply(cfg.preproc, item.cube), item.mask});
        refs = compute_reference_spectra(prepared, ClassCatalog::with_size(a.classes));
    }
    const auto initial = build_model<float>(kind, channels, a.classes, cfg.seed, refs ? &*refs : nullptr);
    const auto result = train(initial, train_set, val_set, cfg);

    save_weights(result.model, a.out);
    write_text(curve, format_curve_csv(result.curve));
    write_text(with_suffix(a.out, ".cfg"), format_train_config(cfg));
    std::cout << "wrote " << a.out << " (best epoch " << result.best_epoch << ")";
    if (!result.curve.empty() && result.curve.back().val_iou)
        std::cout << ", final val macro IoU " << round1(*result.curve.back().val_iou);
    std::cout << "\n";
    return 0;
}

struct InferArgs {
    std::string weights, in, preproc = "none", out = "mask.pgm";
    std::optional<std::string> preview;
    std::size_t tile = 256;
    std::optional<std::size_t> margin;
};

int run_infer(const InferArgs& a) {
    const auto model = load_weights<float>(a.weights);
    const std::size_t margin = a.margin.value_or(receptive_field_radius(model));
    const fs::path preview = a.preview ? fs::path(*a.preview) : fs::path(a.out).replace_extension(".ppm");
    print_config("infer", {{"weights", a.weights}, {"model", to_string(model.kind)}, {"in", a.in},
                           {"preproc", a.preproc}, {"tile", str(a.tile)}, {"margin", str(margin)},
                           {"out", a.out}, {"preview", preview.string()}, {"seed", "none"}});
    const auto cube = apply(parse_preproc(a.preproc), read_envi(a.in));
    const auto mask = infer_tiled(model, cube, a.tile, margin);
    write_mask(mask, a.out);
    write_preview(mask, preview);
    std::cout << "wrote " << a.out << " and " << preview.string() << "\n";
    return 0;
}

struct EvalArgs {
    std::vector<std::string> pred, target;
    std::string out;
    std::size_t classes = 5;
};

int run_eval(const EvalArgs& a) {
    if (a.pred.size() != a.target.size())
        throw ValidationError("eval: got " + std::to_string(a.pred.size()) + " --pred and " +
                              std::to_string(a.target.size()) + " --target masks; pass them in pairs");
    print_config("eval", {{"pairs", str(a.pred.size())}, {"classes", str(a.classes)},
                          {"out", a.out.empty() ? "-" : a.out}, {"seed", "none"}});
    ConfusionMatrix total(a.classes);
    for (std::size_t i = 0; i < a.pred.size(); ++i)
        total += confusion(read_mask(a.pred[i], a.classes), read_mask(a.target[i], a.classes), a.classes);
    const auto report = evaluate(total, ClassCatalog::with_size(a.classes));
    std::cout << format_table(report) << "csv: " << format_csv_row(report) << "\n";
    if (!a.out.empty()) write_text(a.out, to_json(report).dump(2) + "\n");
    return 0;
}

struct ComplexityArgs {
    std::string model = "all";
    std::size_t channels = 224, classes = 5;
};

int run_complexity(const ComplexityArgs& a) {
    print_config("complexity", {{"model", a.model}, {"channels", str(a.channels)}, {"classes", str(a.classes)},
                                {"seed", "none"}});
    ReferenceSpectra refs;
    for (std::size_t k = 0; k < a.classes; ++k) {
        refs.labels.push_back(static_cast<std::uint8_t>(k));
        refs.spectra.emplace_back(a.channels, 1.0);
        refs.pixel_counts.push_back(1);
    }
    std::vector<ModelKind> kinds;
    if (a.model == "all")
        kinds = {ModelKind::samnet, ModelKind::samnet3, ModelKind::mlpnet, ModelKind::plasticnet, ModelKind::plasticnetxl};
    else
        kinds = {parse_model_kind(a.model)};
    std::printf("%-14s %12s %12s %8s\n", "model", "ops/pixel", "parameters", "radius");
    for (auto k : kinds) {
        const auto m = build_model<float>(k, a.channels, a.classes, 0, &refs);
        const auto r = count_complexity(m);
        std::printf("%-14s %12llu %12llu %8zu\n", to_string(k).c_str(), static_cast<unsigned long long>(r.ops_per_pixel),
                    static_cast<unsigned long long>(r.parameters), receptive_field_radius(m));
    }
    return 0;
}

struct SynthArgs {
    SynthConfig cfg;
    std::uint64_t library_seed = 7;
    std::size_t count = 1, val = 0, test = 0;
    std::string out = "synth";
};

int run_synth(const SynthArgs& a) {
    if (a.val + a.test > a.count) throw ValidationError("synth: --val plus --test exceeds --count");
    const auto& c = a.cfg;
    print_config("synth", {{"seed", str(c.seed)}, {"library-seed", str(a.library_seed)}, {"count", str(a.count)},
                           {"height", str(c.height)}, {"width", str(c.width)}, {"channels", str(c.channels)},
                           {"classes", str(c.n_classes)}, {"flakes-per-class", str(c.flakes_per_class)},
                           {"noise", str(c.noise_sigma)}, {"specular", str(c.specular_probability)},
                           {"exposure", str(c.exposure)}, {"val", str(a.val)}, {"test", str(a.test)}, {"out", a.out}});
    c.validate();
    const auto library = signature_library(a.library_seed, c.n_classes, c.channels);
    fs::create_directories(a.out);
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < a.count; ++i) {
        SynthConfig sc = c;
        sc.seed = c.seed + i;
        const auto scene = generate_scene(sc, library);
        char name[32];
        std::snprintf(name, sizeof name, "scene_%03zu", i);
        const fs::path base = fs::path(a.out) / name;
        write_envi(scene.cube, base);
        write_mask(scene.mask, with_suffix(base, ".pgm"));
        write_text(with_suffix(base, ".json"), scene_manifest(sc, scene).dump(2) + "\n");
        const std::string split = i < a.count - a.val - a.test ? "train" : i < a.count - a.test ? "val" : "test";
        entries.push_back({std::string(name) + ".hdr", std::string(name) + ".pgm", split});
    }
    write_manifest(entries, fs::path(a.out) / "manifest.csv");
    std::cout << "wrote " << a.count << " scenes and manifest.csv to " << a.out << "\n";
    return 0;
}

int run_selfcheck() {
    print_config("selfcheck", {{"seed", "fixed"}, {"threads", str(thread_count())}});
    const CheckResult results[] = {check_gradients(), check_sam_equivalence(), check_tiling(ModelKind::plasticnet),
                                   check_tiling(ModelKind::plasticnetxl)};
    bool ok = true;
    for (const auto& r : results) {
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
        ok = ok && r.passed;
    }
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hyperspectral polymer flake segmentation toolkit"};
    app.require_subcommand(1);

    CorrectArgs correct;
    auto* c = app.add_subcommand("correct", "White/dark reference correction of a raw cube");
    c->add_option("--raw", correct.raw, "Raw cube header")->required();
    c->add_option("--bright", correct.bright, "Bright reference header")->required();
    c->add_option("--dark", correct.dark, "Dark reference header")->required();
    c->add_option("--eps", correct.eps, "Denominator clamp");
    c->add_option("--out", correct.out, "Output base path (writes .hdr/.raw)")->required();

    SpectraArgs spectra;
    auto* s = app.add_subcommand("spectra", "Per-class mean reference spectra");
    s->add_option("--manifest", spectra.manifest, "Dataset manifest")->required();
    s->add_option("--split", spectra.split, "Manifest split to average");
    s->add_option("--preproc", spectra.preproc, "Pre-processing applied first");
    s->add_option("--classes", spectra.classes, "Number of classes including background");
    s->add_flag("--no-background", spectra.no_background, "Exclude the background class");
    s->add_option("--out", spectra.out, "Output base path (writes .json and .csv)")->required();

    PreprocessArgs pre;
    auto* p = app.add_subcommand("preprocess", "Apply a spectral pre-processing transform");
    p->add_option("--in", pre.in, "Input cube header")->required();
    p->add_option("--preproc", pre.preproc, "Transform")->required();
    p->add_option("--out", pre.out, "Output base path")->required();

    TrainArgs tr;
    auto* t = app.add_subcommand("train", "Train a model on a manifest's train split");
    t->add_option("--manifest", tr.manifest, "Dataset manifest")->required();
    t->add_option("--config", tr.config, "key=value training config; flags override it");
    t->add_option("--model", tr.model, "samnet, samnet3, mlpnet, plasticnet, plasticnetxl");
    t->add_option("--preproc", tr.preproc, "Pre-processing transform");
    t->add_option("--epochs", tr.epochs, "Epochs");
    t->add_option("--tile", tr.tile, "Training tile size");
    t->add_option("--tiles-per-epoch", tr.tiles_per_epoch, "Adam steps per epoch");
    t->add_option("--lr", tr.lr, "Adam learning rate");
    t->add_option("--seed", tr.seed, "Seed for initialisation and tile sampling");
    t->add_option("--classes", tr.classes, "Number of classes including background");
    t->add_option("--out", tr.out, "Output SFW1 weight file");
    t->add_option("--curve", tr.curve, "Loss/IoU curve CSV (default <out>.curve.csv)");

    InferArgs inf;
    auto* i = app.add_subcommand("infer", "Segment a cube with overlapping tiles");
    i->add_option("--weights", inf.weights, "SFW1 weight file")->required();
    i->add_option("--in", inf.in, "Input cube header")->required();
    i->add_option("--preproc", inf.preproc, "Pre-processing used at training time");
    i->add_option("--tile", inf.tile, "Tile size");
    i->add_option("--margin", inf.margin, "Tile overlap (default: receptive-field radius)");
    i->add_option("--out", inf.out, "Output PGM mask");
    i->add_option("--preview", inf.preview, "False-colour PPM (default: mask path with .ppm)");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "IoU, precision and recall of predicted masks");
    e->add_option("--pred", ev.pred, "Predicted PGM mask (repeatable)")->required();
    e->add_option("--target", ev.target, "Ground-truth PGM mask (repeatable)")->required();
    e->add_option("--classes", ev.classes, "Number of classes including background");
    e->add_option("--out", ev.out, "JSON report path");

    ComplexityArgs cx;
    auto* x = app.add_subcommand("complexity", "Operations per pixel and parameter counts");
    x->add_option("--model", cx.model, "One model kind or 'all'");
    x->add_option("--channels", cx.channels, "Input channels");
    x->add_option("--classes", cx.classes, "Number of classes");

    SynthArgs sy;
    auto* y = app.add_subcommand("synth", "Generate synthetic labelled scenes");
    y->add_option("--seed", sy.cfg.seed, "Seed of the first scene; scene i uses seed + i");
    y->add_option("--library-seed", sy.library_seed, "Seed of the class signature library");
    y->add_option("--count", sy.count, "Number of scenes");
    y->add_option("--val", sy.val, "Scenes assigned to the val split");
    y->add_option("--test", sy.test, "Scenes assigned to the test split (the last ones)");
    y->add_option("--height", sy.cfg.height);
    y->add_option("--width", sy.cfg.width);
    y->add_option("--channels", sy.cfg.channels);
    y->add_option("--classes", sy.cfg.n_classes, "Classes including background");
    y->add_option("--flakes-per-class", sy.cfg.flakes_per_class);
    y->add_option("--noise", sy.cfg.noise_sigma, "Gaussian noise sigma before exposure scaling");
    y->add_option("--specular", sy.cfg.specular_probability, "Probability of a specular flake");
    y->add_option("--exposure", sy.cfg.exposure, "Exposure factor");
    y->add_option("--out", sy.out, "Output directory");

    auto* k = app.add_subcommand("selfcheck", "Gradient, SAM-equivalence and tiling checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        return app.exit(err);
    }

    try {
        if (*c) return run_correct(correct);
        if (*s) return run_spectra(spectra);
        if (*p) return run_preprocess(pre);
        if (*t) return run_train(tr);
        if (*i) return run_infer(inf);
        if (*e) return run_eval(ev);
        if (*x) return run_complexity(cx);
        if (*y) return run_synth(sy);
        if (*k) return run_selfcheck();
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 1;
}
