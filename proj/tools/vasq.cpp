// Placeholder entry point; the subcommand surface lands with the io_cli work.
#include <cstdio>

int main() {
  std::fprintf(stderr, "vasq: not yet wired\n");
  return 2;
}
