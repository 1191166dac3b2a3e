#include "mammil/config.hpp"

#include <fstream>
#include <sstream>

#include "mammil/errors.hpp"

namespace mammil {

namespace {

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

std::int64_t to_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const std::int64_t i = std::stoll(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
}

std::uint64_t to_seed(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const std::uint64_t i = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return i;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a seed, got '" + v + "'");
    }
}

std::vector<std::string> split_on(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : s) {
        if (ch == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

}  // namespace

RunConfig parse_run_config_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream is(text);
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) +
                              ": expected 'section.key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("config line " + std::to_string(line_no) + ": empty key or value");

        if (key == "dataset.manifest") {
            cfg.train_manifest = value;
        } else if (key == "dataset.val_manifest") {
            cfg.val_manifest = value;
        } else if (key == "dataset.test_manifest") {
            cfg.test_manifest = value;
        } else if (key == "dataset.synthetic.n_cases") {
            cfg.has_synthetic = true;
            cfg.synthetic.n_cases = to_int(key, value);
        } else if (key == "dataset.synthetic.image_height") {
            cfg.has_synthetic = true;
            cfg.synthetic.image_height = to_int(key, value);
        } else if (key == "dataset.synthetic.image_width") {
            cfg.has_synthetic = true;
            cfg.synthetic.image_width = to_int(key, value);
        } else if (key == "dataset.synthetic.malignant_fraction") {
            cfg.has_synthetic = true;
            cfg.synthetic.malignant_fraction = to_double(key, value);
        } else if (key == "dataset.synthetic.lesion_contrast") {
            cfg.has_synthetic = true;
            cfg.synthetic.lesion_contrast = to_double(key, value);
        } else if (key == "dataset.synthetic.seed") {
            cfg.has_synthetic = true;
            cfg.synthetic.seed = to_seed(key, value);
            cfg.synthetic_seed_set = true;
        } else if (key == "dataset.synthetic.view_counts") {
            cfg.has_synthetic = true;
            const auto parts = split_on(value, ':');
            if (parts.size() != 5)
                throw ConfigError("config key '" + key +
                                  "': expected 5 colon-separated probabilities "
                                  "(1L/1R:nL/mR:1L+1R:4std:4std+extra)");
            for (std::size_t i = 0; i < 5; ++i)
                cfg.synthetic.view_count_distribution[i] = to_double(key, trim(parts[i]));
        } else if (key == "dataset.synthetic.train_cases") {
            cfg.has_synthetic = true;
            cfg.synthetic.train_cases = to_int(key, value);
        } else if (key == "dataset.synthetic.val_cases") {
            cfg.has_synthetic = true;
            cfg.synthetic.val_cases = to_int(key, value);
        } else if (key == "dataset.synthetic.test_cases") {
            cfg.has_synthetic = true;
            cfg.synthetic.test_cases = to_int(key, value);
        } else if (key == "model.channels") {
            cfg.model.net.channels_per_stage.clear();
            for (const auto& part : split_on(value, ':'))
                cfg.model.net.channels_per_stage.push_back(to_int(key, trim(part)));
        } else if (key == "model.embed_dim") {
            cfg.model.net.embed_dim = to_int(key, value);
        } else if (key == "model.pooling") {
            cfg.model.pooling = parse_pooling_spec(value);
        } else if (key == "model.t_fraction") {
            cfg.model.t_fraction = to_double(key, value);
        } else if (key == "model.k") {
            cfg.model.k = to_int(key, value);
        } else if (key == "model.patch_h") {
            cfg.model.patch_h = to_int(key, value);
        } else if (key == "model.patch_w") {
            cfg.model.patch_w = to_int(key, value);
        } else if (key == "model.attention_hidden") {
            cfg.model.attention_hidden = to_int(key, value);
        } else if (key == "model.image_height") {
            cfg.model.image_h = to_int(key, value);
            cfg.model_extents_set = true;
        } else if (key == "model.image_width") {
            cfg.model.image_w = to_int(key, value);
            cfg.model_extents_set = true;
        } else if (key == "training.optimizer") {
            if (value == "adam")
                cfg.training.optim.kind = OptimKind::adam;
            else if (value == "sgd")
                cfg.training.optim.kind = OptimKind::sgd;
            else
                throw ConfigError("config key '" + key + "': expected adam or sgd");
        } else if (key == "training.lr") {
            cfg.training.optim.lr = to_double(key, value);
        } else if (key == "training.weight_decay") {
            cfg.training.optim.weight_decay = to_double(key, value);
        } else if (key == "training.momentum") {
            cfg.training.optim.momentum = to_double(key, value);
        } else if (key == "training.beta") {
            cfg.training.beta = to_double(key, value);
        } else if (key == "training.pos_weight") {
            cfg.training.pos_weight = value == "auto" ? 0.0 : to_double(key, value);
        } else if (key == "training.batch_size") {
            cfg.training.batch_size = to_int(key, value);
        } else if (key == "training.max_epochs") {
            cfg.training.max_epochs = to_int(key, value);
        } else if (key == "training.patience") {
            cfg.training.patience = to_int(key, value);
        } else if (key == "training.scheme") {
            cfg.training.scheme = parse_scheme(value);
        } else if (key == "eval.roi_match_threshold") {
            cfg.roi_match_threshold = to_double(key, value);
        } else if (key == "seeds.init") {
            cfg.seed_init = to_seed(key, value);
        } else if (key == "seeds.data") {
            cfg.seed_data = to_seed(key, value);
        } else if (key == "seeds.shuffle") {
            cfg.seed_shuffle = to_seed(key, value);
        } else {
            throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + key +
                              "'");
        }
    }
    if (cfg.has_synthetic && !cfg.synthetic_seed_set) cfg.synthetic.seed = cfg.seed_data;
    if (cfg.has_synthetic && !cfg.model_extents_set) {
        cfg.model.image_h = cfg.synthetic.image_height;
        cfg.model.image_w = cfg.synthetic.image_width;
    }
    cfg.model.init_seed = cfg.seed_init;
    cfg.training.shuffle_seed = cfg.seed_shuffle;
    return cfg;
}

RunConfig parse_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    return parse_run_config_text(buf.str());
}

std::string format_run_config(const RunConfig& cfg) {
    std::ostringstream os;
    if (!cfg.train_manifest.empty()) os << "dataset.manifest = " << cfg.train_manifest << "\n";
    if (!cfg.val_manifest.empty()) os << "dataset.val_manifest = " << cfg.val_manifest << "\n";
    if (!cfg.test_manifest.empty()) os << "dataset.test_manifest = " << cfg.test_manifest << "\n";
    if (cfg.has_synthetic) {
        os << "dataset.synthetic.n_cases = " << cfg.synthetic.n_cases << "\n";
        os << "dataset.synthetic.image_height = " << cfg.synthetic.image_height << "\n";
        os << "dataset.synthetic.image_width = " << cfg.synthetic.image_width << "\n";
        os << "dataset.synthetic.malignant_fraction = " << cfg.synthetic.malignant_fraction << "\n";
        os << "dataset.synthetic.lesion_contrast = " << cfg.synthetic.lesion_contrast << "\n";
        os << "dataset.synthetic.seed = " << cfg.synthetic.seed << "\n";
        os << "dataset.synthetic.view_counts =";
        for (std::size_t i = 0; i < 5; ++i)
            os << (i ? ":" : " ") << cfg.synthetic.view_count_distribution[i];
        os << "\n";
        if (cfg.synthetic.train_cases + cfg.synthetic.val_cases + cfg.synthetic.test_cases > 0) {
            os << "dataset.synthetic.train_cases = " << cfg.synthetic.train_cases << "\n";
            os << "dataset.synthetic.val_cases = " << cfg.synthetic.val_cases << "\n";
            os << "dataset.synthetic.test_cases = " << cfg.synthetic.test_cases << "\n";
        }
    }
    os << "model.channels =";
    for (std::size_t i = 0; i < cfg.model.net.channels_per_stage.size(); ++i)
        os << (i ? ":" : " ") << cfg.model.net.channels_per_stage[i];
    os << "\n";
    os << "model.embed_dim = " << cfg.model.net.embed_dim << "\n";
    os << "model.pooling = " << to_string(cfg.model.pooling) << "\n";
    os << "model.t_fraction = " << cfg.model.t_fraction << "\n";
    os << "model.k = " << cfg.model.k << "\n";
    os << "model.patch_h = " << cfg.model.patch_h << "\n";
    os << "model.patch_w = " << cfg.model.patch_w << "\n";
    os << "model.attention_hidden = " << cfg.model.attention_hidden << "\n";
    os << "model.image_height = " << cfg.model.image_h << "\n";
    os << "model.image_width = " << cfg.model.image_w << "\n";
    os << "training.optimizer = " << (cfg.training.optim.kind == OptimKind::adam ? "adam" : "sgd")
       << "\n";
    os << "training.lr = " << cfg.training.optim.lr << "\n";
    os << "training.weight_decay = " << cfg.training.optim.weight_decay << "\n";
    os << "training.momentum = " << cfg.training.optim.momentum << "\n";
    os << "training.beta = " << cfg.training.beta << "\n";
    os << "training.pos_weight = "
       << (cfg.training.pos_weight > 0.0 ? std::to_string(cfg.training.pos_weight)
                                         : std::string("auto"))
       << "\n";
    os << "training.batch_size = " << cfg.training.batch_size << "\n";
    os << "training.max_epochs = " << cfg.training.max_epochs << "\n";
    os << "training.patience = " << cfg.training.patience << "\n";
    os << "training.scheme = " << to_string(cfg.training.scheme) << "\n";
    os << "eval.roi_match_threshold = " << cfg.roi_match_threshold << "\n";
    os << "seeds.init = " << cfg.seed_init << "\n";
    os << "seeds.data = " << cfg.seed_data << "\n";
    os << "seeds.shuffle = " << cfg.seed_shuffle << "\n";
    return os.str();
}

}  // namespace mammil
