#pragma once
// Run artifacts: JSONL metric logs, CSV summaries and the checkpoint
// container (one JSON header line followed by raw little-endian float64
// section payloads).

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tlens/mat.hpp"

namespace tlens {

// Deterministic double formatting for logs ("%.17g": locale-independent and
// round-trip exact).
std::string fmt_double(double v);

class JsonlWriter {
public:
    explicit JsonlWriter(const std::string& path, bool append = false);
    void write(const nlohmann::json& record);
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ofstream out_;
};

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    void row(const std::vector<std::string>& cells);
    static std::string cell(double v) { return fmt_double(v); }

private:
    std::ofstream out_;
    std::size_t width_;
};

struct Checkpoint {
    nlohmann::json meta;
    std::vector<std::pair<std::string, Vec>> sections;

    const Vec* find(const std::string& name) const;
    void add(const std::string& name, Vec data) { sections.emplace_back(name, std::move(data)); }
};

void write_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::string& path);

void ensure_dir(const std::string& path);
std::string read_text_file(const std::string& path);

}  // namespace tlens
