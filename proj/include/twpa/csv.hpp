#pragma once

// CSV emission with a reproducibility header: every file opens with comment
// lines carrying the tool version, the hash of the configuration that
// produced it, and the solver options in effect.

#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "twpa/errors.hpp"
#include "twpa/version.hpp"

namespace twpa {

class CsvWriter {
public:
    explicit CsvWriter(const std::string& path) : out_(path) {
        if (!out_) throw Error("cannot open output file: " + path);
        out_ << "# version: " << kVersion << "\n";
        out_ << std::setprecision(12);
    }

    /// Add a `# key: value` provenance line (before the column header).
    void comment(const std::string& key, const std::string& value) {
        if (header_written_) throw Error("csv: comments must precede the column header");
        out_ << "# " << key << ": " << value << "\n";
    }
    void comment(const std::string& key, uint64_t value) {
        std::ostringstream ss;
        ss << std::hex << std::setw(16) << std::setfill('0') << value;
        comment(key, ss.str());
    }

    void columns(const std::vector<std::string>& names) {
        header_written_ = true;
        for (size_t i = 0; i < names.size(); ++i) out_ << (i ? "," : "") << names[i];
        out_ << "\n";
        n_cols_ = names.size();
    }

    void row(const std::vector<double>& values) {
        if (n_cols_ && values.size() != n_cols_) throw Error("csv: row width mismatch");
        for (size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
        out_ << "\n";
    }

    /// Mixed row for non-numeric fields (e.g. convergence flags).
    void row_raw(const std::vector<std::string>& values) {
        if (n_cols_ && values.size() != n_cols_) throw Error("csv: row width mismatch");
        for (size_t i = 0; i < values.size(); ++i) out_ << (i ? "," : "") << values[i];
        out_ << "\n";
    }

    void flush() { out_.flush(); }

private:
    std::ofstream out_;
    bool header_written_ = false;
    size_t n_cols_ = 0;
};

}  // namespace twpa
