#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "spectraflake/cube.hpp"
#include "spectraflake/envi.hpp"
#include "spectraflake/mask_io.hpp"
#include "spectraflake/metrics.hpp"
#include "spectraflake/models.hpp"
#include "spectraflake/nn.hpp"
#include "spectraflake/parallel.hpp"
#include "spectraflake/preprocess.hpp"

namespace spectraflake {

// ---------------------------------------------------------------------------
// Tiled inference
// ---------------------------------------------------------------------------

// One tile: the clipped input window [y0, y0+h) x [x0, x0+w) and the core
// region it is responsible for writing.
struct Tile {
    std::size_t y0 = 0, x0 = 0, h = 0, w = 0;
    std::size_t core_y0 = 0, core_x0 = 0, core_h = 0, core_w = 0;
};

struct TileGrid {
    std::size_t tile_size = 0;
    std::size_t margin = 0;
    std::vector<Tile> tiles;
};

// Cores of side tile_size - 2*margin partition the image; every tile extends
// its core by the margin on each side, clipped at the image border.
inline TileGrid make_tile_grid(std::size_t height, std::size_t width, std::size_t tile_size, std::size_t margin) {
    if (tile_size <= 2 * margin)
        throw ValidationError("tile size " + std::to_string(tile_size) + " must exceed twice the margin " +
                              std::to_string(margin));
    TileGrid grid{tile_size, margin, {}};
    const std::size_t stride = tile_size - 2 * margin;
    for (std::size_t cy = 0; cy < height; cy += stride)
        for (std::size_t cx = 0; cx < width; cx += stride) {
            Tile t;
            t.core_y0 = cy;
            t.core_x0 = cx;
            t.core_h = std::min(stride, height - cy);
            t.core_w = std::min(stride, width - cx);
            t.y0 = cy >= margin ? cy - margin : 0;
            t.x0 = cx >= margin ? cx - margin : 0;
            t.h = std::min(height, cy + t.core_h + margin) - t.y0;
            t.w = std::min(width, cx + t.core_w + margin) - t.x0;
            grid.tiles.push_back(t);
        }
    return grid;
}

// Labels of a (pre-processed) cube, predicted tile by tile. Only the core of
// each tile is kept; with margin >= receptive-field radius the result equals
// whole-image inference exactly.
template <typename T>
LabelMask infer_tiled(const Model<T>& model, const HSCube& cube, std::size_t tile_size, std::size_t margin) {
    const std::size_t radius = receptive_field_radius(model);
    if (margin < radius)
        throw ValidationError("tile margin " + std::to_string(margin) + " is below the model's receptive-field radius " +
                              std::to_string(radius));
    if (tile_size <= 2 * margin)
        throw ValidationError("tile size " + std::to_string(tile_size) + " must exceed twice the margin " +
                              std::to_string(margin));
    if (cube.height() <= tile_size && cube.width() <= tile_size) return predict(model, cube);

    const auto grid = make_tile_grid(cube.height(), cube.width(), tile_size, margin);
    LabelMask out(cube.height(), cube.width());
    parallel_for(0, grid.tiles.size(), [&](std::size_t i) {
        const Tile& t = grid.tiles[i];
        const auto input = to_tensor<T>(cube, static_cast<std::ptrdiff_t>(t.y0), static_cast<std::ptrdiff_t>(t.x0), t.h, t.w);
        const auto labels = predict(model, input);
        for (std::size_t y = 0; y < t.core_h; ++y)
            for (std::size_t x = 0; x < t.core_w; ++x)
                out(t.core_y0 + y, t.core_x0 + x) = labels(t.core_y0 - t.y0 + y, t.core_x0 - t.x0 + x);
    });
    return out;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t tiles_per_epoch = 64;
    std::size_t tile_size = 256;
    AdamConfig adam{};
    std::uint64_t seed = 0;
    PreprocKind preproc{};
    bool train_frozen = false; // also optimize models built frozen (SAMNet)
};

// Flat key=value file; '#' starts a comment.
inline TrainConfig parse_train_config(std::istream& in) {
    TrainConfig cfg;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto t = detail::trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ParseError("config line " + std::to_string(lineno) + ": expected key = value");
        const auto key = detail::trim(std::string_view(t).substr(0, eq));
        const auto value = detail::trim(std::string_view(t).substr(eq + 1));
        try {
            if (key == "epochs") cfg.epochs = std::stoul(value);
            else if (key == "tiles_per_epoch") cfg.tiles_per_epoch = std::stoul(value);
            else if (key == "tile_size") cfg.tile_size = std::stoul(value);
            else if (key == "lr") cfg.adam.learning_rate = std::stod(value);
            else if (key == "beta1") cfg.adam.beta1 = std::stod(value);
            else if (key == "beta2") cfg.adam.beta2 = std::stod(value);
            else if (key == "adam_eps") cfg.adam.eps = std::stod(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "preproc") cfg.preproc.variant = parse_preproc(value);
            else if (key == "preproc_eps") cfg.preproc.eps = std::stod(value);
            else if (key == "train_frozen") cfg.train_frozen = value == "1" || value == "true";
            else throw ParseError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
        } catch (const std::logic_error&) {
            throw ParseError("config line " + std::to_string(lineno) + ": invalid value for '" + key + "'");
        }
    }
    return cfg;
}

inline std::string format_train_config(const TrainConfig& c) {
    std::ostringstream os;
    os << "epochs = " << c.epochs << "\n"
       << "tiles_per_epoch = " << c.tiles_per_epoch << "\n"
       << "tile_size = " << c.tile_size << "\n"
       << "lr = " << c.adam.learning_rate << "\n"
       << "beta1 = " << c.adam.beta1 << "\n"
       << "beta2 = " << c.adam.beta2 << "\n"
       << "adam_eps = " << c.adam.eps << "\n"
       << "seed = " << c.seed << "\n"
       << "preproc = " << to_string(c.preproc.variant) << "\n"
       << "preproc_eps = " << c.preproc.eps << "\n"
       << "train_frozen = " << (c.train_frozen ? "true" : "false") << "\n";
    return os.str();
}

struct EpochStats {
    std::size_t epoch = 0;
    double loss = 0.0;
    std::optional<double> val_iou;
};

template <typename T>
struct TrainResult {
    Model<T> model;
    std::vector<EpochStats> curve;
    std::size_t best_epoch = 0; // 0 = initial weights
};

inline std::string format_curve_csv(const std::vector<EpochStats>& curve) {
    std::ostringstream os;
    os << "epoch,loss,val_iou\n";
    os.precision(9);
    for (const auto& e : curve) {
        os << e.epoch << "," << e.loss << ",";
        if (e.val_iou) os << *e.val_iou;
        os << "\n";
    }
    return os.str();
}

namespace detail {

template <typename T>
struct ForwardCache {
    std::vector<Tensor<T>> inputs;
    std::vector<Tensor<T>> pre;
};

template <typename T>
Tensor<T> forward_train(const Model<T>& m, Tensor<T> x, ForwardCache<T>& cache) {
    cache.inputs.clear();
    cache.pre.clear();
    if (m.head() == Head::cosine) normalize_pixels(x);
    for (const auto& layer : m.layers) {
        cache.inputs.push_back(x);
        auto z = conv2d_forward(x, layer);
        x = activation_forward(layer.activation, z);
        cache.pre.push_back(std::move(z));
    }
    return x;
}

// Macro IoU (percent) of whole-image predictions over a set of cubes.
template <typename T>
double macro_iou(const Model<T>& m, std::span<const LabeledCube> set, std::size_t n_classes) {
    ConfusionMatrix total(n_classes);
    for (const auto& item : set) total += confusion(predict(m, item.cube), item.mask, n_classes);
    return macro(per_class(total)).iou;
}

} // namespace detail

// Uniform random tiles from uniform random training cubes, one Adam step per
// tile. Pre-processing is applied to every cube up front. After each epoch
// the validation macro IoU is measured and the best epoch's weights are
// returned (the last epoch when there is no validation set).
template <typename T>
TrainResult<T> train(const Model<T>& initial, std::span<const LabeledCube> train_set,
                     std::span<const LabeledCube> val_set, const TrainConfig& cfg) {
    validate_model(initial);
    TrainResult<T> result{initial, {}, 0};
    if (cfg.epochs == 0) return result;
    if (!initial.trainable && !cfg.train_frozen) return result;
    if (train_set.empty()) throw ValidationError("train: empty training set");
    if (cfg.tile_size == 0) throw ValidationError("train: tile size must be positive");
    const std::size_t n = initial.n_classes();

    auto prepare = [&](std::span<const LabeledCube> set) {
        std::vector<LabeledCube> out;
        for (const auto& item : set) {
            auto cube = apply(cfg.preproc, item.cube);
            if (cube.channels() != initial.input_channels())
                throw ValidationError("train: pre-processed cube has " + std::to_string(cube.channels()) +
                                      " channels, model expects " + std::to_string(initial.input_channels()));
            if (item.mask.height != cube.height() || item.mask.width != cube.width())
                throw ValidationError("train: mask does not match cube");
            item.mask.check_range(n);
            out.push_back({std::move(cube), item.mask});
        }
        return out;
    };
    const auto train_data = prepare(train_set);
    const auto val_data = prepare(val_set);

    Model<T> model = initial;
    AdamState<T> adam;
    adam.config = cfg.adam;
    std::mt19937_64 rng(cfg.seed);
    detail::ForwardCache<T> cache;
    double best_iou = -1.0;
    const std::size_t ts = cfg.tile_size;
    std::size_t step = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        double loss_sum = 0.0;
        for (std::size_t s = 0; s < cfg.tiles_per_epoch; ++s, ++step) {
            const auto& item = train_data[std::uniform_int_distribution<std::size_t>(0, train_data.size() - 1)(rng)];
            const std::size_t H = item.cube.height(), W = item.cube.width();
            const std::size_t y0 = H > ts ? std::uniform_int_distribution<std::size_t>(0, H - ts)(rng) : 0;
            const std::size_t x0 = W > ts ? std::uniform_int_distribution<std::size_t>(0, W - ts)(rng) : 0;
            const auto input = to_tensor<T>(item.cube, static_cast<std::ptrdiff_t>(y0), static_cast<std::ptrdiff_t>(x0), ts, ts);
            LabelMask target(ts, ts, 0);
            for (std::size_t y = 0; y < ts && y0 + y < H; ++y)
                for (std::size_t x = 0; x < ts && x0 + x < W; ++x) target(y, x) = item.mask(y0 + y, x0 + x);

            const auto logits = detail::forward_train(model, input, cache);
            auto loss = softmax_xent(logits, target);
            if (!std::isfinite(loss.loss))
                throw NumericError("train: loss became non-finite at step " + std::to_string(step));
            loss_sum += loss.loss;

            Tensor<T> g = std::move(loss.grad_logits);
            std::vector<std::vector<T>> wgrads(model.layers.size()), bgrads(model.layers.size());
            for (std::size_t l = model.layers.size(); l-- > 0;) {
                const auto& layer = model.layers[l];
                g = activation_backward(layer.activation, cache.pre[l], std::move(g));
                auto cg = conv2d_backward(cache.inputs[l], layer, g, l > 0);
                wgrads[l] = std::move(cg.weights);
                bgrads[l] = std::move(cg.biases);
                g = std::move(cg.input);
            }
            std::vector<std::span<T>> params;
            std::vector<std::span<const T>> gspans;
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                params.emplace_back(model.layers[l].weights);
                gspans.emplace_back(wgrads[l]);
                params.emplace_back(model.layers[l].biases);
                gspans.emplace_back(bgrads[l]);
            }
            adam_step<T>(params, gspans, adam);
        }

        EpochStats stats{epoch, cfg.tiles_per_epoch ? loss_sum / static_cast<double>(cfg.tiles_per_epoch) : 0.0, {}};
        if (!val_data.empty()) {
            stats.val_iou = detail::macro_iou(model, std::span<const LabeledCube>(val_data), n);
            if (*stats.val_iou > best_iou) {
                best_iou = *stats.val_iou;
                result.model = model;
                result.best_epoch = epoch;
            }
        } else {
            result.model = model;
            result.best_epoch = epoch;
        }
        result.curve.push_back(stats);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Dataset manifests
// ---------------------------------------------------------------------------

struct ManifestEntry {
    std::filesystem::path cube;
    std::filesystem::path mask;
    std::string split; // train, val or test
};

// One "cube_path,mask_path,split" line per image; relative paths resolve
// against the manifest's directory. Blank lines and '#' comments are skipped.
inline std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest '" + path.string() + "'");
    std::vector<ManifestEntry> out;
    std::string line;
    std::size_t lineno = 0;
    const auto dir = path.parent_path();
    while (std::getline(in, line)) {
        ++lineno;
        const auto t = detail::trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::vector<std::string> parts;
        std::stringstream ss(t);
        std::string item;
        while (std::getline(ss, item, ',')) parts.push_back(detail::trim(item));
        if (parts.size() != 3)
            throw ParseError("manifest line " + std::to_string(lineno) + ": expected cube_path,mask_path,split");
        if (parts[2] != "train" && parts[2] != "val" && parts[2] != "test")
            throw ParseError("manifest line " + std::to_string(lineno) + ": unknown split '" + parts[2] + "'");
        auto resolve = [&](const std::string& p) {
            std::filesystem::path fp(p);
            return fp.is_absolute() ? fp : dir / fp;
        };
        out.push_back({resolve(parts[0]), resolve(parts[1]), parts[2]});
    }
    return out;
}

inline void write_manifest(const std::vector<ManifestEntry>& entries, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot create '" + path.string() + "'");
    for (const auto& e : entries) out << e.cube.string() << "," << e.mask.string() << "," << e.split << "\n";
}

inline std::vector<LabeledCube> load_split(const std::vector<ManifestEntry>& entries, const std::string& split,
                                           std::size_t n_classes) {
    std::vector<LabeledCube> out;
    for (const auto& e : entries) {
        if (e.split != split) continue;
        LabeledCube item{read_envi(e.cube), read_mask(e.mask, n_classes)};
        if (item.mask.height != item.cube.height() || item.mask.width != item.cube.width())
            throw ValidationError("mask '" + e.mask.string() + "' does not match cube '" + e.cube.string() + "'");
        out.push_back(std::move(item));
    }
    return out;
}

} // namespace spectraflake
