#include "tlens/io.hpp"

#include <cstdio>
#include <filesystem>
#include <sstream>
#include <stdexcept>

namespace tlens {

std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

JsonlWriter::JsonlWriter(const std::string& path, bool append) : path_(path) {
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open " + path);
}

void JsonlWriter::write(const nlohmann::json& record) {
    out_ << record.dump() << '\n';
    out_.flush();
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header)
    : width_(header.size()) {
    out_.open(path, std::ios::trunc);
    if (!out_) throw std::runtime_error("cannot open " + path);
    for (std::size_t i = 0; i < header.size(); ++i)
        out_ << header[i] << (i + 1 < header.size() ? "," : "\n");
}

void CsvWriter::row(const std::vector<std::string>& cells) {
    if (cells.size() != width_) throw std::invalid_argument("csv row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i)
        out_ << cells[i] << (i + 1 < cells.size() ? "," : "\n");
    out_.flush();
}

const Vec* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, v] : sections)
        if (n == name) return &v;
    return nullptr;
}

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    nlohmann::json header;
    header["magic"] = "tlens-ckpt";
    header["version"] = 1;
    header["meta"] = ckpt.meta;
    auto& secs = header["sections"] = nlohmann::json::array();
    for (const auto& [name, data] : ckpt.sections)
        secs.push_back({{"name", name}, {"count", data.size()}});

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + path);
    out << header.dump() << '\n';
    for (const auto& [name, data] : ckpt.sections) {
        (void)name;
        out.write(reinterpret_cast<const char*>(data.data()),
                  static_cast<std::streamsize>(data.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint " + path);
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing header");
    const auto header = nlohmann::json::parse(line);
    if (header.at("magic") != "tlens-ckpt")
        throw std::runtime_error("checkpoint: bad magic");

    Checkpoint ckpt;
    ckpt.meta = header.at("meta");
    for (const auto& sec : header.at("sections")) {
        Vec data(sec.at("count").get<std::size_t>());
        if (!in.read(reinterpret_cast<char*>(data.data()),
                     static_cast<std::streamsize>(data.size() * sizeof(double))))
            throw std::runtime_error("checkpoint: truncated section payload");
        ckpt.sections.emplace_back(sec.at("name").get<std::string>(), std::move(data));
    }
    return ckpt;
}

void ensure_dir(const std::string& path) {
    std::filesystem::create_directories(path);
}

std::string read_text_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace tlens
