// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>

#include "forgetlab/cli/run_config.hpp"

namespace forgetlab::cli {

// Each returns the one-line JSON summary; errors propagate as exceptions.
std::string run_asd(const RunConfig& config, std::ostream& out, std::ostream& err);
std::string run_synth(const RunConfig& config, std::ostream& out);
std::string run_train(const RunConfig& config, std::ostream& out);
std::string run_report(const RunConfig& config, std::ostream& out);
std::string run_eval(const RunConfig& config, std::ostream& out);

}  // namespace forgetlab::cli
