#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>

#include "timbre/errors.hpp"
#include "timbre/network.hpp"
#include "timbre/ops.hpp"

namespace timbre::arch {

namespace {

constexpr std::array<std::pair<LayerKind, const char*>, 10> kKindNames{{
    {LayerKind::conv2d, "conv2d"},
    {LayerKind::conv1d_fullheight, "conv1d_fullheight"},
    {LayerKind::spiral, "spiral"},
    {LayerKind::maxpool, "maxpool"},
    {LayerKind::dense, "dense"},
    {LayerKind::relu, "relu"},
    {LayerKind::dropout, "dropout"},
    {LayerKind::softmax, "softmax"},
    {LayerKind::flatten, "flatten"},
    {LayerKind::concat, "concat"},
}};

LayerSpec conv(std::size_t t, std::size_t k, std::size_t n) { return {LayerKind::conv2d, t, k, n}; }
LayerSpec pool(std::size_t t, std::size_t k) { return {LayerKind::maxpool, t, k}; }
LayerSpec relu() { return {LayerKind::relu}; }
LayerSpec flatten() { return {LayerKind::flatten}; }

std::vector<LayerSpec> standard_head()
{
    LayerSpec hidden{LayerKind::dense};
    hidden.channels = kHiddenUnits;
    LayerSpec out{LayerKind::dense};
    out.channels = kClasses;
    out.bias = false;
    return {{LayerKind::concat}, {LayerKind::dropout}, hidden, relu(), {LayerKind::dropout}, out, {LayerKind::softmax}};
}

Branch branch_2d(std::size_t n)
{
    return {"2d", kFullCrop, {conv(5, 5, n), relu(), pool(5, 3), conv(5, 5, n), relu(), pool(5, 3), flatten()}};
}

Branch branch_1d()
{
    LayerSpec full{LayerKind::conv1d_fullheight, 3, 0, 32};
    return {"1d", kHighCrop, {full, relu(), pool(5, 1), conv(3, 1, 32), relu(), pool(5, 1), flatten()}};
}

Branch branch_spiral()
{
    LayerSpec s{LayerKind::spiral, 5, 3, 32};
    s.octaves = 3;
    s.bins_per_octave = 12;
    return {"spiral", kSpiralCrop, {s, relu(), pool(5, 3), conv(5, 5, 32), relu(), pool(5, 3), flatten()}};
}

[[noreturn]] void bad_layer(const std::string& where, const std::string& what)
{
    throw DimensionError("layer " + where + ": " + what);
}

// Shape inference for one layer; appends its parameters to `params`.
Shape infer(const LayerSpec& l, const Shape& in, const std::string& where, std::vector<ParamInfo>* params)
{
    auto add = [&](const std::string& suffix, Shape s, std::size_t fi, std::size_t fo, bool bias) {
        if (params != nullptr) params->push_back({where + "." + to_string(l.kind) + "." + suffix, std::move(s), fi, fo, bias});
    };
    auto need_rank3 = [&] {
        if (in.size() != 3) bad_layer(where, to_string(l.kind) + " expects a frames x bins x channels input, got " + shape_string(in));
    };
    switch (l.kind) {
    case LayerKind::conv2d:
    case LayerKind::conv1d_fullheight:
    case LayerKind::spiral: {
        need_rank3();
        const std::size_t kb = l.kind == LayerKind::conv1d_fullheight ? in[1] : l.bins;
        const std::size_t j = l.kind == LayerKind::spiral ? l.octaves : 1;
        const std::size_t q = l.kind == LayerKind::spiral ? l.bins_per_octave : 0;
        if (l.time == 0 || kb == 0 || l.channels == 0 || j == 0) bad_layer(where, "kernel extents and channels must be positive");
        if (in[0] < l.time) bad_layer(where, "time axis: kernel " + std::to_string(l.time) + " exceeds " + std::to_string(in[0]) + " frames");
        const std::size_t span = q * (j - 1) + kb;
        if (in[1] < span) bad_layer(where, "frequency axis: kernel spans " + std::to_string(span) + " bins, input has " + std::to_string(in[1]));
        const std::size_t taps = l.time * kb * j;
        Shape w = l.kind == LayerKind::spiral ? Shape{l.time, kb, j, in[2], l.channels} : Shape{l.time, kb, in[2], l.channels};
        add("weight", w, taps * in[2], taps * l.channels, false);
        add("bias", {l.channels}, 0, 0, true);
        return {in[0] - l.time + 1, in[1] - span + 1, l.channels};
    }
    case LayerKind::maxpool:
        need_rank3();
        if (l.time == 0 || l.bins == 0) bad_layer(where, "pool extents must be positive");
        if (in[0] < l.time) bad_layer(where, "time axis: pool " + std::to_string(l.time) + " exceeds " + std::to_string(in[0]) + " frames");
        if (in[1] < l.bins) bad_layer(where, "frequency axis: pool " + std::to_string(l.bins) + " exceeds " + std::to_string(in[1]) + " bins");
        return {in[0] / l.time, in[1] / l.bins, in[2]};
    case LayerKind::dense:
        if (in.size() != 1) bad_layer(where, "dense expects a flat input, got " + shape_string(in));
        if (l.channels == 0) bad_layer(where, "dense needs a positive unit count");
        add("weight", {in[0], l.channels}, in[0], l.channels, false);
        if (l.bias) add("bias", {l.channels}, 0, 0, true);
        return {l.channels};
    case LayerKind::relu:
        if (!(l.alpha >= 0.0 && l.alpha <= 1.0)) bad_layer(where, "relu slope outside [0, 1]");
        return in;
    case LayerKind::dropout:
        if (!(l.rate >= 0.0 && l.rate < 1.0)) bad_layer(where, "dropout rate outside [0, 1)");
        return in;
    case LayerKind::softmax:
        if (in.size() != 1) bad_layer(where, "softmax expects a flat input");
        return in;
    case LayerKind::flatten:
        return {shape_size(in)};
    case LayerKind::concat:
        bad_layer(where, "concat may only open the head");
    }
    bad_layer(where, "unknown layer kind");
}

struct Walk {
    std::vector<LayerInfo> layers;
    std::vector<ParamInfo> params;
};

Walk walk(const NetworkSpec& spec)
{
    if (spec.branches.empty()) throw DimensionError("network " + spec.name + " has no branches");
    Walk w;
    std::size_t concat_width = 0;
    for (const auto& b : spec.branches) {
        if (b.crop.lo >= b.crop.hi || b.crop.hi > kInputBins) {
            throw DimensionError("branch " + b.name + ": crop [" + std::to_string(b.crop.lo) + ", " +
                                 std::to_string(b.crop.hi) + ") outside the 96-bin input");
        }
        if (b.layers.empty() || b.layers.back().kind != LayerKind::flatten) {
            throw DimensionError("branch " + b.name + " must end with flatten");
        }
        Shape s{kInputFrames, b.crop.hi - b.crop.lo, 1};
        for (std::size_t i = 0; i < b.layers.size(); ++i) {
            const auto where = b.name + "/" + std::to_string(i);
            const auto before = w.params.size();
            s = infer(b.layers[i], s, where, &w.params);
            std::size_t n = 0;
            for (auto p = before; p < w.params.size(); ++p) n += shape_size(w.params[p].shape);
            w.layers.push_back({where, b.layers[i].kind, s, n});
        }
        concat_width += s[0];
    }

    const auto& h = spec.head;
    if (h.size() < 2 || h.front().kind != LayerKind::concat || h.back().kind != LayerKind::softmax) {
        throw DimensionError("head must open with concat and close with softmax");
    }
    Shape s{concat_width};
    w.layers.push_back({"head/0", LayerKind::concat, s, 0});
    std::size_t last_dense = 0;
    for (std::size_t i = 1; i < h.size(); ++i) {
        const auto where = "head/" + std::to_string(i);
        const auto before = w.params.size();
        s = infer(h[i], s, where, &w.params);
        std::size_t n = 0;
        for (auto p = before; p < w.params.size(); ++p) n += shape_size(w.params[p].shape);
        w.layers.push_back({where, h[i].kind, s, n});
        if (h[i].kind == LayerKind::dense) last_dense = h[i].channels;
    }
    if (last_dense != kClasses) {
        throw DimensionError("head must end in a dense layer with " + std::to_string(kClasses) + " outputs");
    }
    return w;
}

nlohmann::json layer_json(const LayerSpec& l)
{
    nlohmann::json j{{"kind", to_string(l.kind)}};
    switch (l.kind) {
    case LayerKind::spiral:
        j["octaves"] = l.octaves;
        j["bins_per_octave"] = l.bins_per_octave;
        [[fallthrough]];
    case LayerKind::conv2d:
        j["bins"] = l.bins;
        [[fallthrough]];
    case LayerKind::conv1d_fullheight:
        j["time"] = l.time;
        j["channels"] = l.channels;
        break;
    case LayerKind::maxpool:
        j["time"] = l.time;
        j["bins"] = l.bins;
        break;
    case LayerKind::dense:
        j["units"] = l.channels;
        j["bias"] = l.bias;
        break;
    case LayerKind::relu:
        j["alpha"] = l.alpha;
        break;
    case LayerKind::dropout:
        j["rate"] = l.rate;
        break;
    default:
        break;
    }
    return j;
}

LayerSpec layer_from_json(const nlohmann::json& j)
{
    LayerSpec l;
    l.kind = layer_kind_from_string(j.at("kind").get<std::string>());
    l.time = j.value("time", std::size_t{0});
    l.bins = j.value("bins", std::size_t{0});
    l.channels = j.value("channels", j.value("units", std::size_t{0}));
    l.octaves = j.value("octaves", std::size_t{1});
    l.bins_per_octave = j.value("bins_per_octave", std::size_t{12});
    l.alpha = j.value("alpha", kLeakySlope);
    l.rate = j.value("rate", kDropoutRate);
    l.bias = j.value("bias", true);
    return l;
}

} // namespace

std::string to_string(LayerKind k)
{
    for (const auto& [kind, name] : kKindNames) {
        if (kind == k) return name;
    }
    return "unknown";
}

LayerKind layer_kind_from_string(const std::string& s)
{
    for (const auto& [kind, name] : kKindNames) {
        if (s == name) return kind;
    }
    throw ParameterError("unknown layer kind '" + s + "'");
}

NetworkSpec build_2d(std::size_t n_kernels)
{
    if (n_kernels == 0) throw ParameterError("build_2d: kernel count must be positive");
    return {"2d" + std::to_string(n_kernels), {branch_2d(n_kernels)}, standard_head()};
}

NetworkSpec build_1d()
{
    return {"1d", {branch_1d()}, standard_head()};
}

NetworkSpec build_spiral()
{
    return {"spiral", {branch_spiral()}, standard_head()};
}

NetworkSpec build_hybrid(const std::set<Strategy>& strategies)
{
    if (strategies.empty()) throw ParameterError("build_hybrid: at least one strategy is required");
    if (strategies.size() == 1) {
        switch (*strategies.begin()) {
        case Strategy::two_d: return build_2d(32);
        case Strategy::one_d: return build_1d();
        case Strategy::spiral: return build_spiral();
        }
    }
    NetworkSpec spec{"", {}, standard_head()};
    if (strategies.contains(Strategy::two_d)) spec.branches.push_back(branch_2d(32));
    if (strategies.contains(Strategy::one_d)) spec.branches.push_back(branch_1d());
    if (strategies.contains(Strategy::spiral)) spec.branches.push_back(branch_spiral());
    for (const auto& b : spec.branches) spec.name += (spec.name.empty() ? "" : "+") + b.name;
    return spec;
}

std::vector<std::string> architecture_names()
{
    return {"2d32", "2d48", "1d", "spiral", "spiral+1d", "spiral+2d", "1d+2d", "all"};
}

NetworkSpec architecture_by_name(const std::string& name)
{
    using enum Strategy;
    static const std::map<std::string, std::set<Strategy>> hybrids{
        {"spiral+1d", {spiral, one_d}},
        {"spiral+2d", {spiral, two_d}},
        {"1d+2d", {one_d, two_d}},
        {"all", {two_d, one_d, spiral}},
    };
    if (name == "2d32") return build_2d(32);
    if (name == "2d48") return build_2d(48);
    if (name == "1d") return build_1d();
    if (name == "spiral") return build_spiral();
    if (const auto it = hybrids.find(name); it != hybrids.end()) {
        auto spec = build_hybrid(it->second);
        spec.name = name;
        return spec;
    }
    throw ParameterError("unknown architecture '" + name + "'");
}

NetworkSpec load_architecture(const std::string& name_or_path)
{
    const auto names = architecture_names();
    if (std::find(names.begin(), names.end(), name_or_path) != names.end()) {
        return architecture_by_name(name_or_path);
    }
    std::ifstream in(name_or_path);
    if (!in) {
        throw ParameterError("'" + name_or_path + "' is neither a known architecture nor a readable JSON file");
    }
    auto spec = network_from_json(nlohmann::json::parse(in));
    describe(spec);
    return spec;
}

nlohmann::json to_json(const NetworkSpec& spec)
{
    nlohmann::json branches = nlohmann::json::array();
    for (const auto& b : spec.branches) {
        nlohmann::json layers = nlohmann::json::array();
        for (const auto& l : b.layers) layers.push_back(layer_json(l));
        branches.push_back({{"name", b.name}, {"crop", {b.crop.lo, b.crop.hi}}, {"layers", layers}});
    }
    nlohmann::json head = nlohmann::json::array();
    for (const auto& l : spec.head) head.push_back(layer_json(l));
    return {{"name", spec.name}, {"input", {kInputFrames, kInputBins}}, {"branches", branches}, {"head", head}};
}

NetworkSpec network_from_json(const nlohmann::json& j)
{
    try {
        NetworkSpec spec;
        spec.name = j.value("name", std::string("custom"));
        for (const auto& b : j.at("branches")) {
            Branch br;
            br.name = b.at("name").get<std::string>();
            br.crop = {b.at("crop").at(0).get<std::size_t>(), b.at("crop").at(1).get<std::size_t>()};
            for (const auto& l : b.at("layers")) br.layers.push_back(layer_from_json(l));
            spec.branches.push_back(std::move(br));
        }
        if (j.contains("head")) {
            for (const auto& l : j.at("head")) spec.head.push_back(layer_from_json(l));
        } else {
            spec.head = standard_head();
        }
        return spec;
    } catch (const nlohmann::json::exception& e) {
        throw ParameterError(std::string("malformed network JSON: ") + e.what());
    }
}

std::vector<LayerInfo> describe(const NetworkSpec& spec)
{
    return walk(spec).layers;
}

std::vector<ParamInfo> param_layout(const NetworkSpec& spec)
{
    return walk(spec).params;
}

std::size_t count_params(const NetworkSpec& spec)
{
    std::size_t n = 0;
    for (const auto& l : walk(spec).layers) n += l.params;
    return n;
}

std::vector<Tensor> init_params(const NetworkSpec& spec, std::mt19937_64& rng)
{
    std::vector<Tensor> out;
    for (const auto& p : param_layout(spec)) {
        Tensor t(p.shape);
        if (!p.is_bias) {
            const double limit = std::sqrt(6.0 / static_cast<double>(p.fan_in + p.fan_out));
            for (auto& v : t.data()) v = static_cast<float>((2.0 * ops::unit_uniform(rng) - 1.0) * limit);
        }
        out.push_back(std::move(t));
    }
    return out;
}

template <typename T>
ad::NodeId emit(ad::Graph<T>& g, const NetworkSpec& spec, ad::NodeId input, std::mt19937_64* dropout_rng,
                bool logits_only)
{
    ad::ParamId next = 0;
    auto apply = [&](const LayerSpec& l, ad::NodeId x) -> ad::NodeId {
        switch (l.kind) {
        case LayerKind::conv2d:
        case LayerKind::conv1d_fullheight: {
            const auto id = g.conv2d(x, next, next + 1);
            next += 2;
            return id;
        }
        case LayerKind::spiral: {
            const auto id = g.spiral_conv(x, next, next + 1, l.bins_per_octave);
            next += 2;
            return id;
        }
        case LayerKind::maxpool: return g.maxpool(x, l.time, l.bins);
        case LayerKind::dense: {
            const ad::ParamId w = next++;
            std::optional<ad::ParamId> b;
            if (l.bias) b = next++;
            return g.dense(x, w, b);
        }
        case LayerKind::relu: return g.leaky_relu(x, static_cast<T>(l.alpha));
        case LayerKind::dropout: return g.dropout(x, l.rate, dropout_rng);
        case LayerKind::softmax: return g.softmax(x);
        case LayerKind::flatten: return g.flatten(x);
        case LayerKind::concat: break;
        }
        throw DimensionError("emit: unexpected layer kind " + to_string(l.kind));
    };

    std::vector<ad::NodeId> features;
    for (const auto& b : spec.branches) {
        ad::NodeId x = b.crop == kFullCrop ? input : g.crop_bins(input, b.crop.lo, b.crop.hi);
        for (const auto& l : b.layers) x = apply(l, x);
        features.push_back(x);
    }
    ad::NodeId x = features.size() == 1 ? features.front() : g.concat(features);
    for (std::size_t i = 1; i < spec.head.size(); ++i) {
        if (logits_only && i + 1 == spec.head.size() && spec.head[i].kind == LayerKind::softmax) break;
        x = apply(spec.head[i], x);
    }
    return x;
}

template ad::NodeId emit<float>(ad::Graph<float>&, const NetworkSpec&, ad::NodeId, std::mt19937_64*, bool);
template ad::NodeId emit<double>(ad::Graph<double>&, const NetworkSpec&, ad::NodeId, std::mt19937_64*, bool);

Tensor forward(const NetworkSpec& spec, std::span<const Tensor> params, const Tensor& spectrogram)
{
    if (spectrogram.shape() != Shape{kInputFrames, kInputBins}) {
        throw DimensionError("forward: expected a 128x96 spectrogram, got " + shape_string(spectrogram.shape()));
    }
    const auto layout = param_layout(spec);
    if (layout.size() != params.size()) {
        throw DimensionError("forward: network expects " + std::to_string(layout.size()) + " parameter tensors, got " +
                             std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < layout.size(); ++i) {
        if (params[i].shape() != layout[i].shape) {
            throw DimensionError("forward: parameter " + layout[i].name + " has shape " + shape_string(params[i].shape()) +
                                 ", expected " + shape_string(layout[i].shape));
        }
    }
    ad::Graph<float> g(params);
    const auto in = g.input(spectrogram.reshaped({kInputFrames, kInputBins, 1}));
    return g.value(emit(g, spec, in, nullptr, false));
}

} // namespace timbre::arch
