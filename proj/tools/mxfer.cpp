#include <iostream>
#include <string>
#include <vector>

#include "mxfer/cli.hpp"
#include "mxfer/service.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mxfer::run_cli(args, std::cout, std::cerr,
                        [](const std::string& host, int port, const std::string& static_dir, const std::string& persist) {
                          return mxfer::serve(host, port, static_dir, persist, std::cerr);
                        });
}
