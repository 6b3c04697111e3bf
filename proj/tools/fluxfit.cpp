#include "fluxfit/cli/app.hpp"

int main(int argc, char **argv) { return fluxfit::cli::run(argc, argv); }
