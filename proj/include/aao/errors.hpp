#pragma once

#include <stdexcept>
#include <string>

namespace aao {

// Shape disagreement between tensor operands.
struct shape_error : std::invalid_argument {
    explicit shape_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Token id outside the vocabulary.
struct vocab_error : std::out_of_range {
    explicit vocab_error(const std::string& msg) : std::out_of_range(msg) {}
};

// API misuse: violated precondition or call-sequence contract.
struct contract_error : std::logic_error {
    explicit contract_error(const std::string& msg) : std::logic_error(msg) {}
};

// Input that makes the requested quantity undefined (e.g. zero-norm vector
// fed to a cosine).
struct degenerate_input_error : std::invalid_argument {
    explicit degenerate_input_error(const std::string& msg) : std::invalid_argument(msg) {}
};

// Malformed external input (dataset line, config file, checkpoint).
struct parse_error : std::runtime_error {
    explicit parse_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Training diverged (non-finite loss or gradient).
struct numeric_error : std::runtime_error {
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace aao
