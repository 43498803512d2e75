#include "cbanet/cli.hpp"

int main(int argc, char** argv) { return cbanet::cli_main(argc, argv); }
