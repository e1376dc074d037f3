#include <stdio.h>
#include "fluxread.h"

int main(void) {
    FluxDeviceParams p;
    FluxNumerics n;
    FluxSpectrum *spec = NULL;
    double e[4];
    size_t len = 0;
    char msg[256];

    fluxread_device_measured(&p);
    fluxread_numerics_default(&n);
    if (fluxread_spectrum_new(&p, &n, 3.141592653589793, &spec) != FLUX_STATUS_OK) {
        fluxread_last_error(msg, sizeof msg);
        fprintf(stderr, "%s\n", msg);
        return 1;
    }
    if (fluxread_spectrum_energies(spec, NULL, 0, &len) != FLUX_STATUS_OK || len < 4) {
        return 1;
    }
    FluxStatus s = fluxread_spectrum_energies(spec, e, 4, &len);
    printf("status %d (buffer too small expected), f01 query length %zu\n", (int)s, len);
    fluxread_spectrum_free(spec);

    p.e_c = -1.0;
    if (fluxread_spectrum_new(&p, &n, 0.0, &spec) == FLUX_STATUS_VALIDATION) {
        fluxread_last_error(msg, sizeof msg);
        printf("rejected: %s\n", msg);
    }
    return 0;
}
