#include "obsmae/cli/app.hpp"

int main(int argc, char** argv) { return obsmae::cli::dispatch(argc, argv); }
