#include "cli.hpp"

int main(int argc, char** argv) { return latentflow::cli_main(argc, argv); }
