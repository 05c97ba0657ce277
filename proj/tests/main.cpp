#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "nlcausal/common.hpp"

int main(int argc, char** argv) {
  // Library warnings are expected in several edge-case tests; keep the log readable.
  nlcausal::set_warning_handler([](std::string_view) {});
  doctest::Context ctx(argc, argv);
  return ctx.run();
}
