#include <math.h>
#include <stdio.h>
#include <string.h>

#include "envauth.h"

#define CHECK(call)                                                       \
    do {                                                                  \
        EaStatus s_ = (call);                                             \
        if (s_ != EA_STATUS_OK) {                                         \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,             \
                    ea_last_error_message());                             \
            return 1;                                                     \
        }                                                                 \
    } while (0)

int main(void) {
    double ref[12] = {0, 0, 1, 0, 0, 1, 2, 3, 1, 1, 3, 1};
    double obs[12];
    /* shift every row by (1, -2) */
    for (int i = 0; i < 6; i++) {
        obs[2 * i] = ref[2 * i] + 1.0;
        obs[2 * i + 1] = ref[2 * i + 1] - 2.0;
    }
    EaFingerprint *r = NULL, *o = NULL, *c = NULL;
    CHECK(ea_fingerprint_new(ref, 6, 2, "obj", 0, &r));
    CHECK(ea_fingerprint_new(obs, 6, 2, "obj", 1, &o));

    EaTransform *t = NULL;
    bool degenerate = true;
    CHECK(ea_estimate_transform(o, r, &t, &degenerate));
    double l[2];
    CHECK(ea_transform_translation(t, l, 2));
    if (degenerate || fabs(l[0] - 1.0) > 1e-9 || fabs(l[1] + 2.0) > 1e-9) {
        fprintf(stderr, "bad translation %g %g\n", l[0], l[1]);
        return 1;
    }
    CHECK(ea_correct_reference(r, t, &c));
    double d = -1.0;
    CHECK(ea_bhattacharyya(o, c, &d));
    if (d > 1e-9) {
        fprintf(stderr, "distance %g\n", d);
        return 1;
    }
    if (ea_authenticate(d, 0.5) != EA_VERDICT_LEGITIMATE) return 1;

    if (ea_fingerprint_new(ref, 1, 2, "obj", 0, &c) != EA_STATUS_INVALID_INPUT) return 1;
    if (ea_last_error_message() == NULL) return 1;

    EaScenario *sc = NULL;
    EaReport *rep = NULL;
    char *json = NULL;
    CHECK(ea_scenario_from_json("{\"num_objects\": 4, \"num_windows\": 4, \"seed\": 3}", &sc));
    CHECK(ea_scenario_run(sc, &rep));
    CHECK(ea_report_json(rep, &json));
    if (strstr(json, "\"baseline\"") == NULL) return 1;

    ea_string_free(json);
    ea_report_free(rep);
    ea_scenario_free(sc);
    ea_transform_free(t);
    ea_fingerprint_free(c);
    ea_fingerprint_free(o);
    ea_fingerprint_free(r);
    printf("ok %s\n", ea_version());
    return 0;
}
