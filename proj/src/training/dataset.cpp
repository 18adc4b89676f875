#include "timbre/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "timbre/audio.hpp"
#include "timbre/errors.hpp"
#include "timbre/features.hpp"
#include "timbre/parallel.hpp"

namespace timbre::training {

namespace {

std::vector<std::string> split_csv_line(std::string_view line)
{
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(std::move(cur));
    return out;
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

template <typename Int>
Int parse_int(const std::string& s, std::size_t line, const char* column)
{
    Int v{};
    const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || end != s.data() + s.size()) {
        throw DatasetError("manifest line " + std::to_string(line) + ": " + column + " '" + s + "' is not an integer");
    }
    return v;
}

} // namespace

std::string to_string(Split s)
{
    return s == Split::train ? "train" : "test";
}

Manifest parse_manifest(std::string_view csv, const std::filesystem::path& base_dir)
{
    std::istringstream in{std::string(csv)};
    std::string line;
    std::size_t line_no = 0;
    std::map<std::string, std::size_t> col;
    Manifest m;
    std::array<bool, kClasses> named{};
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (col.empty()) {
            for (std::size_t i = 0; i < fields.size(); ++i) col[fields[i]] = i;
            for (const char* req : {"path", "label", "split"}) {
                if (!col.contains(req)) throw DatasetError(std::string("manifest header lacks the '") + req + "' column");
            }
            continue;
        }
        auto get = [&](const char* name) -> std::string {
            const auto it = col.find(name);
            if (it == col.end() || it->second >= fields.size()) return {};
            return fields[it->second];
        };
        if (fields.size() != col.size()) {
            throw DatasetError("manifest line " + std::to_string(line_no) + ": expected " + std::to_string(col.size()) +
                               " fields, got " + std::to_string(fields.size()));
        }
        ManifestEntry e;
        std::filesystem::path p = get("path");
        if (p.empty()) throw DatasetError("manifest line " + std::to_string(line_no) + ": empty path");
        e.path = p.is_absolute() ? p : base_dir / p;
        e.label = parse_int<std::size_t>(get("label"), line_no, "label");
        if (e.label >= kClasses) {
            throw DatasetError("manifest line " + std::to_string(line_no) + ": label " + std::to_string(e.label) +
                               " outside [0, " + std::to_string(kClasses) + ")");
        }
        const auto split = get("split");
        if (split == "train") {
            e.split = Split::train;
        } else if (split == "test") {
            e.split = Split::test;
        } else {
            throw DatasetError("manifest line " + std::to_string(line_no) + ": split must be train or test, got '" + split + "'");
        }
        e.artist = get("artist");
        e.instrument = get("instrument");
        e.nuance = get("nuance");
        if (const auto p = get("pitch"); !p.empty()) e.pitch = parse_int<int>(p, line_no, "pitch");
        if (const auto name = get("class_name"); !name.empty()) {
            auto& slot = m.class_names[e.label];
            if (named[e.label] && slot != name) {
                throw DatasetError("manifest line " + std::to_string(line_no) + ": label " + std::to_string(e.label) +
                                   " named both '" + slot + "' and '" + name + "'");
            }
            slot = name;
            named[e.label] = true;
        }
        m.entries.push_back(std::move(e));
    }
    if (col.empty()) throw DatasetError("manifest is empty");
    for (std::size_t k = 0; k < kClasses; ++k) {
        if (m.class_names[k].empty()) m.class_names[k] = "class" + std::to_string(k);
    }
    return m;
}

void validate_manifest(const Manifest& m)
{
    std::array<std::size_t, kClasses> train_files{};
    std::map<std::string, Split> seen;
    std::map<std::string, std::set<Split>> artists;
    for (const auto& e : m.entries) {
        if (e.split == Split::train) ++train_files[e.label];
        const auto key = std::filesystem::weakly_canonical(e.path).string();
        const auto [it, fresh] = seen.emplace(key, e.split);
        if (!fresh && it->second != e.split) {
            throw DatasetError("recording " + e.path.string() + " is listed in both the train and test splits");
        }
        if (!e.artist.empty()) artists[e.artist].insert(e.split);
    }
    for (const auto& [artist, splits] : artists) {
        if (splits.size() > 1) throw DatasetError("artist '" + artist + "' appears in both the train and test splits");
    }
    for (std::size_t k = 0; k < kClasses; ++k) {
        if (train_files[k] == 0) {
            throw DatasetError("class " + std::to_string(k) + " (" + m.class_names[k] + ") has no training file");
        }
    }
}

Manifest read_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open manifest " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    auto m = parse_manifest(ss.str(), path.parent_path());
    validate_manifest(m);
    return m;
}

void write_manifest(const std::filesystem::path& path, const Manifest& m)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot write manifest " + path.string());
    out << "path,label,split,artist,instrument,pitch,nuance,class_name\n";
    const auto base = path.parent_path();
    for (const auto& e : m.entries) {
        const auto rel = e.path.lexically_relative(base.empty() ? "." : base);
        const auto shown = rel.empty() || rel.native().starts_with("..") ? e.path : rel;
        out << csv_field(shown.generic_string()) << ',' << e.label << ',' << to_string(e.split) << ','
            << csv_field(e.artist) << ',' << csv_field(e.instrument) << ','
            << (e.pitch ? std::to_string(*e.pitch) : "") << ',' << csv_field(e.nuance) << ','
            << csv_field(m.class_names[e.label]) << '\n';
    }
    if (!out) throw DatasetError("write failed for manifest " + path.string());
}

double silent_fraction(const std::vector<bool>& silent, std::size_t first, std::size_t count)
{
    if (count == 0) return 1.0;
    const std::size_t lo = first / kSilenceFrame;
    const std::size_t hi = std::min(silent.size(), (first + count + kSilenceFrame - 1) / kSilenceFrame);
    if (lo >= hi) return 1.0;
    std::size_t n = 0;
    for (std::size_t f = lo; f < hi; ++f) n += silent[f] ? 1 : 0;
    return static_cast<double>(n) / static_cast<double>(hi - lo);
}

Recording analyze_recording(const AudioBuffer& audio, std::size_t label, double silence_db)
{
    Recording r;
    r.label = label;
    r.n_samples = audio.samples.size();
    r.magnitude = cqt_frames(audio);
    r.silent = detect_silence(audio, silence_db);
    const std::size_t hop = default_cqt().config().hop;
    if (r.n_samples >= kExcerptSamples) {
        for (std::size_t b = 0; b * hop + kExcerptSamples <= r.n_samples; ++b) {
            if (silent_fraction(r.silent, b * hop, kExcerptSamples) < kMaxSilentFraction) r.valid_starts.push_back(b);
        }
    }
    return r;
}

Dataset::Dataset(const Manifest& manifest, Split split, const DatasetConfig& cfg)
{
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < manifest.entries.size(); ++i) {
        if (manifest.entries[i].split == split) rows.push_back(i);
    }
    recordings_.resize(rows.size());
    parallel_for(rows.size(), cfg.threads, [&](std::size_t i) {
        const auto& e = manifest.entries[rows[i]];
        AudioBuffer audio = load_audio(e.path);
        if (audio.samples.size() < kExcerptSamples) {
            throw DatasetError(e.path.string() + " is shorter than 3 s");
        }
        recordings_[i] = analyze_recording(audio, e.label, cfg.silence_db);
        recordings_[i].entry = rows[i];
    });
    index();
}

Dataset::Dataset(std::vector<Recording> recordings) : recordings_(std::move(recordings))
{
    index();
}

void Dataset::index()
{
    for (std::size_t i = 0; i < recordings_.size(); ++i) {
        const auto& r = recordings_[i];
        if (r.label >= kClasses) throw IndexError("recording label " + std::to_string(r.label) + " out of range");
        members_[r.label].push_back(i);
        const std::size_t before = cumulative_[r.label].empty() ? 0 : cumulative_[r.label].back();
        cumulative_[r.label].push_back(before + r.valid_starts.size());
    }
}

Tensor Dataset::excerpt(const Recording& r, std::size_t first_frame) const
{
    return perceptual_weighting(crop_frames(r.magnitude, static_cast<std::ptrdiff_t>(first_frame), kExcerptFrames)).values;
}

Tensor Dataset::sample_excerpt(std::size_t k, std::mt19937_64& rng) const
{
    if (k >= kClasses) throw IndexError("sample_excerpt: class " + std::to_string(k) + " out of range");
    const std::size_t total = window_count(k);
    if (total == 0) throw DatasetError("class " + std::to_string(k) + " has no usable 3 s window");
    const std::size_t draw = std::uniform_int_distribution<std::size_t>(0, total - 1)(rng);
    const auto& cum = cumulative_[k];
    const std::size_t slot = static_cast<std::size_t>(std::upper_bound(cum.begin(), cum.end(), draw) - cum.begin());
    const auto& r = recordings_[members_[k][slot]];
    const std::size_t offset = draw - (slot == 0 ? 0 : cum[slot - 1]);
    return excerpt(r, r.valid_starts[offset] + 1);
}

Batch sample_batch(const Dataset& data, std::size_t per_class, std::mt19937_64& rng)
{
    std::vector<std::size_t> labels;
    for (std::size_t k = 0; k < kClasses; ++k) labels.insert(labels.end(), per_class, k);
    std::shuffle(labels.begin(), labels.end(), rng);
    Batch b{Tensor({labels.size(), kExcerptFrames, arch::kInputBins}), labels};
    const std::size_t stride = kExcerptFrames * arch::kInputBins;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto x = data.sample_excerpt(labels[i], rng);
        std::copy(x.data().begin(), x.data().end(), b.inputs.data().begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    return b;
}

Normalization normalize_batch(Tensor& inputs)
{
    const auto values = inputs.data();
    const double n = static_cast<double>(values.size());
    double sum = 0.0;
    for (float v : values) sum += v;
    const double mean = sum / n;
    double ss = 0.0;
    for (float v : values) ss += (v - mean) * (v - mean);
    const double stddev = std::sqrt(ss / n);
    if (!(stddev > 0.0)) throw NumericError("degenerate batch: every value equals " + std::to_string(mean));
    const Normalization norm{mean, stddev};
    apply_normalization(inputs, norm);
    return norm;
}

void apply_normalization(Tensor& inputs, const Normalization& n)
{
    for (auto& v : inputs.data()) v = static_cast<float>((v - n.mean) / n.stddev);
}

} // namespace timbre::training
