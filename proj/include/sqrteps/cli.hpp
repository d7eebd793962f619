#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sqrteps::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 2,       // bad flags, unparsable input, unknown experiment
    kValidation = 3,  // geography/districting rejected by a domain check
    kTolerance = 4,   // an experiment missed its declared tolerance
};

/// One real per line, first line the presented state's label. Blank lines
/// are skipped. Throws FormatError naming the offending line.
std::vector<double> read_labels(std::istream& in);

/// Entry point of the sqrteps tool; returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sqrteps::cli
