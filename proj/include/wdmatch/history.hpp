#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "wdmatch/errors.hpp"
#include "wdmatch/eval.hpp"

namespace wdmatch {

struct EpochRecord {
    int epoch = 0; // 1-based
    double train_loss = 0.0;
    double train_match_loss = 0.0;
    double dev_metric = 0.0;
    double wd_estimate = 0.0;
};

// Per-epoch training record, emitted as the history CSV.
struct RunHistory {
    std::vector<EpochRecord> rows;

    std::vector<double> wd_column() const {
        std::vector<double> out;
        out.reserve(rows.size());
        for (const auto& r : rows) out.push_back(r.wd_estimate);
        return out;
    }

    std::string to_csv() const {
        std::ostringstream os;
        os << "epoch,train_loss,train_match_loss,dev_metric,wd_estimate\n";
        for (const auto& r : rows) {
            os << r.epoch << "," << format_g17(r.train_loss) << ","
               << format_g17(r.train_match_loss) << "," << format_g17(r.dev_metric) << ","
               << format_g17(r.wd_estimate) << "\n";
        }
        return os.str();
    }

    void write_csv(const std::string& path) const {
        std::ofstream out(path);
        if (!out) throw IoError("history: cannot open '" + path + "' for writing");
        out << to_csv();
        if (!out) throw IoError("history: write failure on '" + path + "'");
    }
};

inline std::vector<double> wd_diff(const RunHistory& baseline, const RunHistory& regularized) {
    return wd_diff(baseline.wd_column(), regularized.wd_column());
}

} // namespace wdmatch
