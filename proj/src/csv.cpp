#include "cflsim/csv.hpp"

#include <fstream>
#include <ostream>
#include <stdexcept>

#include "cflsim/experiment.hpp"

namespace cflsim {

void write_csv(const std::vector<RunRecord>& records, std::ostream& out) {
    out << "round,loss,dist_to_opt,info_loss,diverged\n";
    for (const auto& r : records) {
        out << r.round << ',' << format_double(r.loss) << ',';
        if (r.dist_to_opt) out << format_double(*r.dist_to_opt);
        out << ',';
        if (r.info_loss) out << format_double(*r.info_loss);
        out << ',' << (r.diverged ? "true" : "false") << '\n';
    }
}

void emit_csv(const std::vector<RunRecord>& records, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    write_csv(records, out);
    out.flush();
    if (!out) throw std::runtime_error("write to '" + path.string() + "' failed");
}

}  // namespace cflsim
