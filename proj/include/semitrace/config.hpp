#pragma once

#include <algorithm>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "semitrace/model.hpp"
#include "semitrace/testfn.hpp"
#include "semitrace/trace.hpp"

namespace semitrace {

// ---------------------------------------------------------------------------
// Experiment configuration: flat `key = value` pairs under [section] headers.
// Unknown sections or keys are rejected with their position; serialization is
// canonical so parse -> serialize -> parse is the identity.
//
//   [potential]
//   preset = quartic-1d          # or: file = pot.txt, or inline n/E_c/germ/...
//   [testfn]
//   profile = bump
//   T = 1.0
//   c = 1.0
//   quad_order = 64
//   [window]
//   epsilon = 0.5
//   [schedule]
//   h0 = 1e-4
//   ratio = 0.31622776601683794
//   count = 9
//   [method]
//   spectrum = rescaled          # direct | rescaled | both
//   [tolerances]
//   trunc_tol_rel = 1e-12
//   nodes_per_wavelength = 40
//   [run]
//   seed = 12345
//   out_dir = out
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    // potential
    std::string preset;          // one of the bundled names, or empty
    std::string potential_file;  // path to a potential definition, or empty
    std::string potential_inline;  // inline potential text (germ/term/W lines)
    // testfn
    std::string profile = "bump";
    double band_radius = 1.0;
    double tf_scale = 1.0;
    int quad_order = 64;
    // window
    double epsilon = 0.5;
    // schedule
    double h0 = 1e-3;
    double ratio = 0.1;
    int count = 3;
    // method
    std::string spectrum_method = "rescaled";
    // tolerances
    double trunc_tol_rel = 1e-12;
    double nodes_per_wavelength = 40.0;
    double cache_nodes_per_wavelength = 12.6;
    // run
    std::uint64_t seed = 12345;
    std::string out_dir = "out";

    std::vector<double> h_schedule() const {
        std::vector<double> hs;
        double h = h0;
        for (int i = 0; i < count; ++i) {
            hs.push_back(h);
            h *= ratio;
        }
        return hs;
    }

    TestFunction test_function() const {
        return TestFunction(profile_from_name(profile), band_radius, tf_scale, quad_order);
    }

    TraceCurveOptions trace_options() const {
        TraceCurveOptions opt;
        opt.trunc_tol_rel = trunc_tol_rel;
        opt.direct_solve.nodes_per_wavelength = nodes_per_wavelength;
        opt.cache_solve.nodes_per_wavelength = cache_nodes_per_wavelength;
        return opt;
    }
};

// ---------------------------------------------------------------------------
// Bundled presets, one per verified claim.
// ---------------------------------------------------------------------------

inline std::vector<std::string> preset_names() {
    return {"quartic-1d", "sextic-1d", "perturbed-quartic", "radial-quartic-2d",
            "witten-1d", "regular-level"};
}

inline PotentialModel preset_model(const std::string& name) {
    if (name == "quartic-1d") return model_1d({{4, 1.0}});
    if (name == "sextic-1d") return model_1d({{6, 1.0}});
    if (name == "perturbed-quartic") return model_1d({{4, 1.0}, {6, 5.0}});
    if (name == "witten-1d") {
        // |grad f|^2 with f = x^4, first-order term Lap f = 12 x^2
        PotentialModel m = model_1d({{6, 16.0}});
        Polynomial w(1);
        w.add_term({2, 0, 0}, 12.0);
        m.subprincipal = w;
        return m;
    }
    if (name == "regular-level") return model_1d({{4, 1.0}});
    if (name == "radial-quartic-2d") {
        Polynomial g(2);
        g.add_term({4, 0, 0}, 1.0);
        g.add_term({2, 2, 0}, 2.0);
        g.add_term({0, 4, 0}, 1.0);  // (x1^2 + x2^2)^2
        PotentialModel m(2, 0.0, g);
        m.radial = true;
        return m;
    }
    throw ConfigError("unknown preset '" + name + "'");
}

inline ExperimentConfig preset_config(const std::string& name) {
    ExperimentConfig c;
    c.preset = name;
    if (name == "quartic-1d") {
        c.spectrum_method = "rescaled";
        c.h0 = 1e-4;
        c.ratio = std::pow(10.0, -0.5);
        c.count = 9;  // down to 1e-8
    } else if (name == "sextic-1d") {
        c.spectrum_method = "rescaled";
        c.h0 = 1e-4;
        c.ratio = std::pow(10.0, -0.5);
        c.count = 9;
    } else if (name == "perturbed-quartic") {
        c.spectrum_method = "direct";
        c.h0 = 1e-3;
        c.ratio = std::pow(10.0, -0.25);
        c.count = 9;  // down to 1e-5
    } else if (name == "witten-1d") {
        c.spectrum_method = "rescaled";
        c.h0 = 1e-4;
        c.ratio = std::pow(10.0, -0.5);
        c.count = 9;
        c.trunc_tol_rel = 1e-8;  // the k = 6 cache grows like h^{-1/2}
    } else if (name == "radial-quartic-2d") {
        c.spectrum_method = "rescaled";
        c.h0 = 1e-4;
        c.ratio = 0.1;
        c.count = 3;  // down to 1e-6
        c.trunc_tol_rel = 1e-7;
    } else if (name == "regular-level") {
        c.spectrum_method = "direct";
        c.h0 = 1e-3;
        c.ratio = 0.1;
        c.count = 1;
        c.epsilon = 0.5;
    } else {
        throw ConfigError("unknown preset '" + name + "'");
    }
    return c;
}

inline PotentialModel config_model(const ExperimentConfig& c, const std::string& file_text = "") {
    int sources = !c.preset.empty() + !c.potential_file.empty() + !c.potential_inline.empty();
    if (sources != 1)
        throw ConfigError("exactly one of preset / file / inline potential must be given");
    if (!c.preset.empty()) return preset_model(c.preset);
    if (!c.potential_inline.empty()) return parse_potential_text(c.potential_inline);
    return parse_potential_text(file_text);
}

// ---------------------------------------------------------------------------
// Parser / serializer
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    std::size_t b = s.find_last_not_of(" \t\r");
    if (a == std::string::npos) return "";
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& v, int line) {
    std::size_t pos = 0;
    double d;
    try {
        d = std::stod(v, &pos);
    } catch (...) {
        throw ConfigError("expected a number, got '" + v + "'", line, 1);
    }
    if (pos != v.size()) throw ConfigError("trailing characters in number '" + v + "'", line, 1);
    return d;
}

inline long long parse_int(const std::string& v, int line) {
    std::size_t pos = 0;
    long long d;
    try {
        d = std::stoll(v, &pos);
    } catch (...) {
        throw ConfigError("expected an integer, got '" + v + "'", line, 1);
    }
    if (pos != v.size()) throw ConfigError("trailing characters in integer '" + v + "'", line, 1);
    return d;
}

}  // namespace detail

inline ExperimentConfig parse_config_text(const std::string& text) {
    ExperimentConfig c;
    std::istringstream in(text);
    std::string raw;
    std::string section;
    int lineno = 0;
    std::vector<std::string> inline_potential_lines;
    while (std::getline(in, raw)) {
        ++lineno;
        std::string line = raw;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("unterminated section header", lineno, 1);
            section = line.substr(1, line.size() - 2);
            const std::vector<std::string> known{"potential", "testfn",     "window",
                                                 "schedule",  "method",     "tolerances",
                                                 "run"};
            if (std::find(known.begin(), known.end(), section) == known.end())
                throw ConfigError("unknown section [" + section + "]", lineno, 1);
            continue;
        }
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("expected key = value", lineno, 1);
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string val = detail::trim(line.substr(eq + 1));
        const int col = static_cast<int>(raw.find(key)) + 1;
        auto unknown = [&]() {
            throw ConfigError("unknown key '" + key + "' in [" + section + "]", lineno, col);
        };
        if (section == "potential") {
            if (key == "preset") c.preset = val;
            else if (key == "file") c.potential_file = val;
            else if (key == "n" || key == "E_c" || key == "x0" || key == "radial" ||
                     key == "germ" || key == "term" || key == "W")
                inline_potential_lines.push_back(key + " " + val);
            else unknown();
        } else if (section == "testfn") {
            if (key == "profile") c.profile = val;
            else if (key == "T") c.band_radius = detail::parse_double(val, lineno);
            else if (key == "c") c.tf_scale = detail::parse_double(val, lineno);
            else if (key == "quad_order") c.quad_order = static_cast<int>(detail::parse_int(val, lineno));
            else unknown();
        } else if (section == "window") {
            if (key == "epsilon") c.epsilon = detail::parse_double(val, lineno);
            else unknown();
        } else if (section == "schedule") {
            if (key == "h0") c.h0 = detail::parse_double(val, lineno);
            else if (key == "ratio") c.ratio = detail::parse_double(val, lineno);
            else if (key == "count") c.count = static_cast<int>(detail::parse_int(val, lineno));
            else unknown();
        } else if (section == "method") {
            if (key == "spectrum") c.spectrum_method = val;
            else unknown();
        } else if (section == "tolerances") {
            if (key == "trunc_tol_rel") c.trunc_tol_rel = detail::parse_double(val, lineno);
            else if (key == "nodes_per_wavelength")
                c.nodes_per_wavelength = detail::parse_double(val, lineno);
            else if (key == "cache_nodes_per_wavelength")
                c.cache_nodes_per_wavelength = detail::parse_double(val, lineno);
            else unknown();
        } else if (section == "run") {
            if (key == "seed") c.seed = static_cast<std::uint64_t>(detail::parse_int(val, lineno));
            else if (key == "out_dir") c.out_dir = val;
            else unknown();
        } else {
            throw ConfigError("key outside of any section", lineno, 1);
        }
    }
    for (const auto& l : inline_potential_lines) c.potential_inline += l + "\n";
    // structural checks
    if (c.count < 1) throw ConfigError("schedule count must be >= 1");
    if (c.h0 <= 0.0 || c.ratio <= 0.0 || c.ratio >= 1.0)
        throw ConfigError("schedule must be positive and strictly decreasing (0 < ratio < 1)");
    if (c.epsilon <= 0.0) throw ConfigError("window epsilon must be positive");
    if (c.trunc_tol_rel <= 0.0) throw ConfigError("tolerances must be positive");
    trace_method_from_name(c.spectrum_method);
    profile_from_name(c.profile);
    return c;
}

inline std::string serialize_config(const ExperimentConfig& c) {
    std::string s;
    s += "[potential]\n";
    if (!c.preset.empty()) s += "preset = " + c.preset + "\n";
    if (!c.potential_file.empty()) s += "file = " + c.potential_file + "\n";
    if (!c.potential_inline.empty()) {
        std::istringstream in(c.potential_inline);
        std::string line;
        while (std::getline(in, line)) {
            auto sp = line.find(' ');
            if (sp != std::string::npos) s += line.substr(0, sp) + " = " + line.substr(sp + 1) + "\n";
        }
    }
    s += "[testfn]\n";
    s += "profile = " + c.profile + "\n";
    s += "T = " + fmt_g17(c.band_radius) + "\n";
    s += "c = " + fmt_g17(c.tf_scale) + "\n";
    s += "quad_order = " + std::to_string(c.quad_order) + "\n";
    s += "[window]\n";
    s += "epsilon = " + fmt_g17(c.epsilon) + "\n";
    s += "[schedule]\n";
    s += "h0 = " + fmt_g17(c.h0) + "\n";
    s += "ratio = " + fmt_g17(c.ratio) + "\n";
    s += "count = " + std::to_string(c.count) + "\n";
    s += "[method]\n";
    s += "spectrum = " + c.spectrum_method + "\n";
    s += "[tolerances]\n";
    s += "trunc_tol_rel = " + fmt_g17(c.trunc_tol_rel) + "\n";
    s += "nodes_per_wavelength = " + fmt_g17(c.nodes_per_wavelength) + "\n";
    s += "cache_nodes_per_wavelength = " + fmt_g17(c.cache_nodes_per_wavelength) + "\n";
    s += "[run]\n";
    s += "seed = " + std::to_string(c.seed) + "\n";
    s += "out_dir = " + c.out_dir + "\n";
    return s;
}

}  // namespace semitrace
