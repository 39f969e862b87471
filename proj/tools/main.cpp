#include "mixls/cli.hpp"

int main(int argc, char** argv) { return mixls::run_cli(argc, argv); }
