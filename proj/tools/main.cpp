#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "cli.hpp"

int main(int argc, char** argv) {
  spdlog::set_default_logger(spdlog::stderr_color_mt("irisseg"));
  spdlog::set_pattern("[%H:%M:%S] %^%l%$ %v");
  return irisseg::cli::run({argv + 1, argv + argc});
}
