#include "nam/errors.hpp"
#include "nam/eval.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace nam {

using nlohmann::json;

void write_report(std::ostream& out, const std::vector<Metric>& metrics) {
    out << "metric\tvalue\tn\tmean\n";
    for (const auto& m : metrics) {
        out << m.name << '\t' << std::setprecision(6) << m.value << '\t' << m.n << '\t' << m.mean << '\n';
    }
}

std::string report_to_json(const Report& report) {
    json j;
    j["task"] = report.task;
    j["metrics"] = json::array();
    for (const auto& m : report.metrics) {
        if (!std::isfinite(m.value)) throw Error("report: metric '" + m.name + "' is not finite");
        j["metrics"].push_back({{"name", m.name}, {"value", m.value}, {"n", m.n}, {"mean", m.mean}});
    }
    j["notes"] = report.notes;
    return j.dump(2) + "\n";
}

Report report_from_json(const std::string& text) {
    Report r;
    try {
        const json j = json::parse(text);
        r.task = j.at("task").get<std::string>();
        for (const auto& m : j.at("metrics")) {
            Metric x;
            x.name = m.at("name").get<std::string>();
            x.value = m.at("value").get<double>();
            x.n = m.at("n").get<std::size_t>();
            x.mean = m.value("mean", x.value);
            r.metrics.push_back(std::move(x));
        }
        if (j.contains("notes")) r.notes = j.at("notes").get<std::map<std::string, std::string>>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed results file: ") + e.what());
    }
    return r;
}

void save_report(const std::filesystem::path& path, const Report& report) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out << report_to_json(report);
    if (!out) throw Error("write failed for '" + path.string() + "'");
}

Report load_report(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path.string() + "' for reading");
    std::stringstream ss;
    ss << in.rdbuf();
    return report_from_json(ss.str());
}

}  // namespace nam
