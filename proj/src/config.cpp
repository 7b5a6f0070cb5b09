#include "fundus/config.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <vector>

#include "fundus/errors.hpp"

namespace fundus::config {

namespace {

struct KeyValue {
    std::string key, value;
    int line;
};

std::vector<KeyValue> tokenize(const std::string& text, const std::string& origin) {
    std::vector<KeyValue> pairs;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            const auto b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError(origin + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + line + "'");
        KeyValue kv{trim(line.substr(0, eq)), trim(line.substr(eq + 1)), lineno};
        if (kv.key.empty() || kv.value.empty())
            throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key or value");
        pairs.push_back(std::move(kv));
    }
    return pairs;
}

struct Setter {
    std::string doc;
    std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
T parse_number(const std::string& v);

template <>
double parse_number<double>(const std::string& v) {
    std::size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
}

template <>
int parse_number<int>(const std::string& v) {
    std::size_t pos = 0;
    int d = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
}

template <>
std::uint64_t parse_number<std::uint64_t>(const std::string& v) {
    std::size_t pos = 0;
    unsigned long long d = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
}

bool parse_bool(const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument(v);
}

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"model", {"wroim | psbn | twomodel (default wroim)",
                   [](RunConfig& c, const std::string& v) { c.model.kind = models::kind_from(v); }}},
        {"preset", {"desk | paper: frame/depth/width bundle applied before other keys (default desk)",
                    [](RunConfig& c, const std::string& v) {
                        if (v == "desk") {
                            c.model.frame = 128; c.model.depth = 3;
                            c.model.base_channels = 16; c.model.weak_base_channels = 8;
                        } else if (v == "paper") {
                            c.model.frame = 512; c.model.depth = 4;
                            c.model.base_channels = 32; c.model.weak_base_channels = 16;
                        } else {
                            throw std::invalid_argument(v);
                        }
                    }}},
        {"frame", {"input size N; images are resized to N x N (default 128)",
                   [](RunConfig& c, const std::string& v) { c.model.frame = parse_number<int>(v); }}},
        {"crop_base", {"image-space RoI crop extent; 0 means frame/2 (default 0)",
                       [](RunConfig& c, const std::string& v) { c.model.crop_base = parse_number<int>(v); }}},
        {"depth", {"pool/upsample stages of the main U-Nets (default 3)",
                   [](RunConfig& c, const std::string& v) { c.model.depth = parse_number<int>(v); }}},
        {"base_channels", {"channels at the first scale, doubling per scale (default 16)",
                           [](RunConfig& c, const std::string& v) { c.model.base_channels = parse_number<int>(v); }}},
        {"convs_per_block", {"convolutions per block (default 2)",
                             [](RunConfig& c, const std::string& v) { c.model.convs_per_block = parse_number<int>(v); }}},
        {"weak_base_channels", {"channels of the depth-1 RoI-proposal net (default 8)",
                                [](RunConfig& c, const std::string& v) { c.model.weak_base_channels = parse_number<int>(v); }}},
        {"lr", {"SGD learning rate (default 0.001)",
                [](RunConfig& c, const std::string& v) { c.train.lr = parse_number<double>(v); }}},
        {"momentum", {"SGD momentum in [0,1) (default 0.95)",
                      [](RunConfig& c, const std::string& v) { c.train.momentum = parse_number<double>(v); }}},
        {"batch_size", {"samples per optimizer step, gradients averaged (default 1)",
                        [](RunConfig& c, const std::string& v) { c.train.batch_size = parse_number<int>(v); }}},
        {"epochs", {"training epochs (default 100)",
                    [](RunConfig& c, const std::string& v) { c.train.epochs = parse_number<int>(v); }}},
        {"seed", {"master seed; subsystem seeds are derived by hashing (default 7)",
                  [](RunConfig& c, const std::string& v) { c.train.seed = parse_number<std::uint64_t>(v); }}},
        {"train_frac", {"train share of the split (default 0.8)",
                        [](RunConfig& c, const std::string& v) { c.train.train_frac = parse_number<double>(v); }}},
        {"roi_weight", {"weight of the weak-RoI loss term (default 1.0)",
                        [](RunConfig& c, const std::string& v) { c.train.roi_weight = parse_number<double>(v); }}},
        {"augment", {"enable training-time augmentation (default true)",
                     [](RunConfig& c, const std::string& v) { c.train.augment = parse_bool(v); }}},
        {"zoom_min", {"zoom range lower bound (default 0.8)",
                      [](RunConfig& c, const std::string& v) { c.aug.zoom_min = parse_number<double>(v); }}},
        {"zoom_max", {"zoom range upper bound (default 1.2)",
                      [](RunConfig& c, const std::string& v) { c.aug.zoom_max = parse_number<double>(v); }}},
        {"rotate_min", {"rotation range lower bound, degrees (default 0)",
                        [](RunConfig& c, const std::string& v) { c.aug.rotate_min_deg = parse_number<double>(v); }}},
        {"rotate_max", {"rotation range upper bound, degrees (default 50)",
                        [](RunConfig& c, const std::string& v) { c.aug.rotate_max_deg = parse_number<double>(v); }}},
        {"translate_min", {"translation range lower bound, fraction of frame (default 0)",
                           [](RunConfig& c, const std::string& v) { c.aug.translate_min_frac = parse_number<double>(v); }}},
        {"translate_max", {"translation range upper bound, fraction of frame (default 0.1)",
                           [](RunConfig& c, const std::string& v) { c.aug.translate_max_frac = parse_number<double>(v); }}},
        {"hflip", {"allow horizontal flips (default true)",
                   [](RunConfig& c, const std::string& v) { c.aug.hflip = parse_bool(v); }}},
        {"vflip", {"allow vertical flips (default true)",
                   [](RunConfig& c, const std::string& v) { c.aug.vflip = parse_bool(v); }}},
        {"eps", {"dice denominator epsilon (default 1e-5)",
                 [](RunConfig& c, const std::string& v) { c.metrics.eps = parse_number<double>(v); }}},
        {"iou_threshold", {"binarization threshold for IoU and mask outputs (default 0.5)",
                           [](RunConfig& c, const std::string& v) { c.metrics.iou_threshold = parse_number<double>(v); }}},
        {"clahe", {"apply CLAHE preprocessing (default true)",
                   [](RunConfig& c, const std::string& v) { c.clahe_enabled = parse_bool(v); }}},
        {"clahe_clip", {"CLAHE clip limit, multiples of the uniform bin height (default 2.0)",
                        [](RunConfig& c, const std::string& v) { c.clahe_clip = parse_number<double>(v); }}},
        {"clahe_tiles", {"CLAHE tile grid; must divide the frame (default 8)",
                         [](RunConfig& c, const std::string& v) { c.clahe_tiles = parse_number<int>(v); }}},
        {"parallel", {"use OpenMP kernels (default true)",
                      [](RunConfig& c, const std::string& v) { c.parallel = parse_bool(v); }}},
    };
    return table;
}

}  // namespace

RunConfig parse_string(const std::string& text, const std::string& origin) {
    auto pairs = tokenize(text, origin);
    const auto& table = setters();
    for (const auto& kv : pairs)
        if (!table.count(kv.key))
            throw ConfigError(origin + ":" + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");

    RunConfig cfg;
    cfg.model.crop_base = 0;  // 0 = auto (frame/2), resolved below
    // preset first, everything else in file order on top
    for (const auto& kv : pairs)
        if (kv.key == "preset") table.at(kv.key).set(cfg, kv.value);
    for (const auto& kv : pairs) {
        if (kv.key == "preset") continue;
        try {
            table.at(kv.key).set(cfg, kv.value);
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError(origin + ":" + std::to_string(kv.line) + ": bad value '" + kv.value +
                              "' for key '" + kv.key + "'");
        }
    }
    if (cfg.model.crop_base == 0) cfg.model.crop_base = cfg.model.frame / 2;
    cfg.validate();
    return cfg;
}

RunConfig parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str(), path);
}

void RunConfig::validate() const {
    try {
        model.validate();
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    if (train.lr <= 0) throw ConfigError("lr must be positive");
    if (train.momentum < 0 || train.momentum >= 1) throw ConfigError("momentum must be in [0, 1)");
    if (train.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (train.epochs < 1) throw ConfigError("epochs must be >= 1");
    if (train.train_frac <= 0 || train.train_frac >= 1)
        throw ConfigError("train_frac must be in (0, 1)");
    if (metrics.eps <= 0) throw ConfigError("eps must be positive");
    if (aug.zoom_min > aug.zoom_max || aug.rotate_min_deg > aug.rotate_max_deg ||
        aug.translate_min_frac > aug.translate_max_frac)
        throw ConfigError("augmentation ranges must satisfy min <= max");
    if (clahe_enabled && (clahe_tiles <= 0 || model.frame % clahe_tiles != 0))
        throw ConfigError("clahe_tiles must divide the frame");
}

std::uint64_t RunConfig::config_hash() const {
    std::string canon = std::string(models::kind_name(model.kind)) + "|" +
                        std::to_string(model.frame) + "|" + std::to_string(model.crop_base) + "|" +
                        std::to_string(model.depth) + "|" + std::to_string(model.base_channels) +
                        "|" + std::to_string(model.convs_per_block) + "|" +
                        std::to_string(model.weak_base_channels);
    return fnv1a64(canon);
}

std::string reference_text() {
    std::string out = "config keys (key=value, one per line, '#' comments):\n";
    for (const auto& [key, s] : setters()) out += "  " + key + ": " + s.doc + "\n";
    return out;
}

}  // namespace fundus::config
