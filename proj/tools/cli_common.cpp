#include "cli_common.hpp"

#include <toml.hpp>

#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

#include "verlab/attn_io.hpp"
#include "verlab/error.hpp"
#include "verlab/geometry.hpp"

namespace verlab::cli {

void RunConfig::validate() const {
    render.validate();
    if (patch_size < 1) throw ConfigError("patch_size must be >= 1");
    if (k < 1) throw ConfigError("k must be >= 1");
    if (n_patches < 1) throw ConfigError("n_patches must be >= 1");
    if (!(delta >= 0.0)) throw ConfigError("delta must be >= 0");
    if (workers < 1) throw ConfigError("workers must be >= 1");
    prompt_template(template_id);
}

TriggerMode parse_mode(const std::string& s) {
    if (s == "reasoning") return TriggerMode::Reasoning;
    if (s == "instruct") return TriggerMode::Instruct;
    throw ConfigError("mode must be 'instruct' or 'reasoning', got '" + s + "'");
}

std::string_view mode_name(TriggerMode m) { return m == TriggerMode::Instruct ? "instruct" : "reasoning"; }

namespace {

template <typename T>
T toml_get(const toml::node& node, const std::string& key) {
    if constexpr (std::is_same_v<T, double>) {
        if (auto v = node.value<double>()) return *v;
    } else if constexpr (std::is_same_v<T, std::string>) {
        if (auto v = node.value<std::string>()) return *v;
    } else {
        if (auto v = node.value<std::int64_t>()) {
            if (*v < 0) throw ConfigError("config." + key + ": must be >= 0");
            return static_cast<T>(*v);
        }
    }
    throw ConfigError("config." + key + ": wrong type");
}

}  // namespace

void apply_toml(const fs::path& path, RunConfig& cfg) {
    toml::table tbl;
    try {
        tbl = toml::parse_file(path.string());
    } catch (const toml::parse_error& e) {
        std::ostringstream msg;
        msg << "config " << path.string() << ": " << e.description() << " at line " << e.source().begin.line;
        throw ConfigError(msg.str());
    }
    for (const auto& [k, node] : tbl) {
        const std::string key(k.str());
        if (key == "patch_size") cfg.patch_size = toml_get<int>(node, key);
        else if (key == "k") cfg.k = toml_get<std::size_t>(node, key);
        else if (key == "n_patches") cfg.n_patches = toml_get<std::size_t>(node, key);
        else if (key == "delta") cfg.delta = toml_get<double>(node, key);
        else if (key == "mode") cfg.mode = parse_mode(toml_get<std::string>(node, key));
        else if (key == "workers") cfg.workers = toml_get<std::size_t>(node, key);
        else if (key == "out") cfg.out = toml_get<std::string>(node, key);
        else if (key == "template") cfg.template_id = toml_get<std::string>(node, key);
        else if (key == "render") {
            const auto* r = node.as_table();
            if (!r) throw ConfigError("config.render: expected table");
            for (const auto& [rk, rn] : *r) {
                const std::string name(rk.str());
                const std::string full = "render." + name;
                auto& rc = cfg.render;
                if (name == "page_width_px") rc.page_width_px = toml_get<int>(rn, full);
                else if (name == "page_height_px") rc.page_height_px = toml_get<int>(rn, full);
                else if (name == "margin_x") rc.margin_x = toml_get<int>(rn, full);
                else if (name == "margin_y") rc.margin_y = toml_get<int>(rn, full);
                else if (name == "char_width_px") rc.char_width_px = toml_get<int>(rn, full);
                else if (name == "line_height_px") rc.line_height_px = toml_get<int>(rn, full);
                else if (name == "ink_value") rc.ink_value = static_cast<std::uint8_t>(toml_get<int>(rn, full));
                else if (name == "background_value")
                    rc.background_value = static_cast<std::uint8_t>(toml_get<int>(rn, full));
                else throw ConfigError("config." + full + ": unknown key");
            }
        } else {
            throw ConfigError("config." + key + ": unknown key");
        }
    }
}

std::vector<SampleOutcome> run_pool(const std::vector<std::string>& ids, std::size_t workers,
                                    const std::function<SampleOutcome(std::size_t)>& fn) {
    const std::size_t n = ids.size();
    std::vector<SampleOutcome> out(n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr fatal;
    std::mutex fatal_mu;
    auto worker = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                out[i] = fn(i);
            } catch (const MissingStepError&) {
                std::lock_guard lock(fatal_mu);
                if (!fatal) fatal = std::current_exception();
                next = n;
            } catch (const std::exception& e) {
                out[i].error = e.what();
            }
            if (out[i].id.empty()) out[i].id = ids[i];
        }
    };
    const std::size_t width = std::max<std::size_t>(1, std::min(workers, n));
    if (width == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < width; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (fatal) std::rethrow_exception(fatal);
    return out;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

void write_json(const fs::path& path, const json& j) { io::write_file(path, dump(j)); }

json read_json(const fs::path& path) {
    try {
        return json::parse(io::read_file(path));
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void check_sample_id(const std::string& id) {
    if (id.empty() || id == "." || id == ".." || id.find_first_of("/\\") != std::string::npos ||
        id.find('\0') != std::string::npos) {
        throw InputError("sample id '" + id + "' cannot be used as a directory name");
    }
}

json matrix_to_json(const ScoreMatrix& m) {
    json rows = json::array();
    for (int l = 0; l < m.num_layers; ++l) {
        json row = json::array();
        for (int h = 0; h < m.num_heads; ++h) row.push_back(m.at({l, h}));
        rows.push_back(std::move(row));
    }
    return rows;
}

ScoreMatrix matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty() || !j[0].is_array() || j[0].empty()) {
        throw FormatError("score matrix: expected non-empty array of rows");
    }
    ScoreMatrix m(static_cast<int>(j.size()), static_cast<int>(j[0].size()));
    for (int l = 0; l < m.num_layers; ++l) {
        if (!j[l].is_array() || static_cast<int>(j[l].size()) != m.num_heads) {
            throw FormatError("score matrix: ragged rows");
        }
        for (int h = 0; h < m.num_heads; ++h) m.at({l, h}) = j[l][h].get<double>();
    }
    return m;
}

json head_to_json(HeadId h) { return json{{"layer", h.layer}, {"head", h.head}}; }

HeadId head_from_json(const json& j) {
    if (!j.is_object() || !j.contains("layer") || !j.contains("head")) {
        throw FormatError("head: expected {layer, head}");
    }
    return {j.at("layer").get<int>(), j.at("head").get<int>()};
}

std::vector<HeadId> parse_head_list(const std::string& s) {
    std::vector<HeadId> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) throw ConfigError("heads: expected layer:head, got '" + item + "'");
        try {
            std::size_t used_l = 0, used_h = 0;
            const std::string ls = item.substr(0, colon), hs = item.substr(colon + 1);
            const int l = std::stoi(ls, &used_l), h = std::stoi(hs, &used_h);
            if (used_l != ls.size() || used_h != hs.size() || l < 0 || h < 0) throw std::invalid_argument(item);
            out.push_back({l, h});
        } catch (const std::logic_error&) {
            throw ConfigError("heads: expected layer:head, got '" + item + "'");
        }
    }
    if (out.empty()) throw ConfigError("heads: empty list");
    return out;
}

json failures_json(const std::vector<SampleOutcome>& outcomes) {
    json arr = json::array();
    for (const auto& o : outcomes) {
        if (o.error) arr.push_back({{"id", o.id}, {"error", *o.error}});
    }
    return arr;
}

std::size_t failure_count(const std::vector<SampleOutcome>& outcomes) {
    std::size_t n = 0;
    for (const auto& o : outcomes) n += o.error.has_value();
    return n;
}

RenderedSample load_rendered_sample(const fs::path& dir) {
    RenderedSample rs;
    rs.sample = eval::sample_from_json(io::read_file(dir / "sample.json"));
    rs.layout = layout_from_json(io::read_file(dir / "layout.json"), rs.sample.context);
    rs.coverage = decode_coverage(io::read_file(dir / "coverage.bin"));
    const json meta = read_json(dir / "evidence.json");
    rs.stats.rho = meta.at("rho").get<double>();
    rs.stats.evidence_pixel_count = meta.at("evidence_pixels").get<long long>();
    rs.stats.total_pixels = meta.at("total_pixels").get<long long>();
    rs.patch_size = meta.at("patch_size").get<int>();
    return rs;
}

std::vector<std::string> rendered_ids(const fs::path& render_dir) {
    const json report = read_json(render_dir / "render_report.json");
    std::vector<std::string> ids;
    for (const auto& id : report.at("rendered")) ids.push_back(id.get<std::string>());
    return ids;
}

}  // namespace verlab::cli
