#pragma once

#include "zsar/chat_transport.hpp"
#include "zsar/encoders.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace zsar::cli {

enum ExitCode : int { kOk = 0, kRuntime = 1, kUsage = 2, kEnvironment = 3 };

struct Environment {
    std::ostream* out = nullptr;
    std::ostream* err = nullptr;
    /// `required` is false when a transport is only used to fill cold cache
    /// entries; returning null then means "cache only".
    std::function<std::unique_ptr<ChatTransport>(const LlmConfig&, bool required)> transport_factory;
    std::function<std::shared_ptr<const Encoder>(const EncoderSpec&)> encoder_factory;
};

/// Process defaults: std::cout/std::cerr, HTTP transport, make_encoder.
Environment default_environment();

/// argv without the program name.
int run(const std::vector<std::string>& args, Environment env);

}  // namespace zsar::cli
