#ifndef MIBCI_MIBCI_H
#define MIBCI_MIBCI_H

#include <stddef.h>

#if defined(MIBCI_BUILDING_LIBRARY)
#define MIBCI_API __attribute__((visibility("default")))
#else
#define MIBCI_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. Every call returns one; on failure mibci_last_error() holds
 * the message for the calling thread. */
typedef enum mibci_status {
    MIBCI_OK = 0,
    MIBCI_ERR_PARAMETER = 1,
    MIBCI_ERR_SHAPE = 2,
    MIBCI_ERR_DESIGN = 3,
    MIBCI_ERR_LENGTH = 4,
    MIBCI_ERR_DATA_QUALITY = 5,
    MIBCI_ERR_CALIBRATION = 6,
    MIBCI_ERR_DATA = 7,
    MIBCI_ERR_FIT = 8,
    MIBCI_ERR_NUMERIC = 9,
    MIBCI_ERR_TRAINING = 10,
    MIBCI_ERR_PARSE = 11,
    MIBCI_ERR_VERSION = 12,
    MIBCI_ERR_CONFIG = 13,
    MIBCI_ERR_IO = 14,
    MIBCI_ERR_TIMEOUT = 15,
    MIBCI_ERR_STARTUP = 16,
    MIBCI_ERR_REPORT = 17,
    MIBCI_ERR_INTERNAL = 100
} mibci_status;

typedef struct mibci_session mibci_session;

MIBCI_API const char* mibci_version(void);
MIBCI_API const char* mibci_last_error(void);
MIBCI_API const char* mibci_status_name(mibci_status status);

/* Strings returned through char** out-parameters are owned by the caller. */
MIBCI_API void mibci_string_free(char* text);

/* Wolpaw information transfer rate in bits per minute. */
MIBCI_API mibci_status mibci_itr(int n_classes, double accuracy, double seconds_per_selection, double* bits_per_minute);

/* Reads a JSON-lines latency ledger. Outputs may be NULL. */
MIBCI_API mibci_status mibci_latency_report(const char* ledger_path, char** report_json, char** report_table);

/* Header, montage, duration and markers of a recording file. */
MIBCI_API mibci_status mibci_recording_info(const char* path, char** info_json);

/* Writes a synthetic training session, a calibration recording and a class
 * mapping. Request keys: "session" (synthetic session object), "output",
 * "calibration_output", "mapping_output", "calibration_s". */
MIBCI_API mibci_status mibci_simulate(const char* request_json, char** result_json);

/* Streams a source through the cue paradigm into a recording. Request keys:
 * "source" ("replay:<file>" or "synth:<session.json>"), "factor", "output",
 * "classes", "n_per_class", "seed", "timeout_ms", "ws" ("addr:port"). */
MIBCI_API mibci_status mibci_record(const char* request_json, char** result_json);

/* Calibration mode of the paradigm: one calibration_start/calibration_end
 * pair. Request keys: "source", "factor", "output", "calibration_s", "timeout_ms". */
MIBCI_API mibci_status mibci_calibrate(const char* request_json, char** result_json);

/* Offline training. Request keys follow the training options ("recordings",
 * "calibration", "mapping", "output", "report", "seed", ...). The result holds
 * the report; log_text (may be NULL) receives the progress and confusion table. */
MIBCI_API mibci_status mibci_train(const char* request_json, char** result_json, char** log_text);

/* Live session. Request keys: "model", "source", "factor", "ws" ("addr:port"),
 * "config" (pipeline config object), "seed", "qte" (bool). */
MIBCI_API mibci_status mibci_session_create(const char* request_json, mibci_session** session);
MIBCI_API mibci_status mibci_session_start(mibci_session* session);
/* Blocks until the source is exhausted and the pipeline has drained. */
MIBCI_API mibci_status mibci_session_wait(mibci_session* session);
/* Safe to call from another thread while mibci_session_wait blocks. */
MIBCI_API mibci_status mibci_session_stop(mibci_session* session);
/* Stats, QTE results and the bound WebSocket port. */
MIBCI_API mibci_status mibci_session_summary(mibci_session* session, char** summary_json);
/* Port of the WebSocket endpoint, 0 when the session has none. */
MIBCI_API mibci_status mibci_session_ws_port(mibci_session* session, int* port);
MIBCI_API mibci_status mibci_session_write_ledger(mibci_session* session, const char* path);
/* Session log markers as a JSON array of {"ts","label"}. */
MIBCI_API mibci_status mibci_session_markers(mibci_session* session, char** markers_json);
MIBCI_API void mibci_session_destroy(mibci_session* session);

#ifdef __cplusplus
}
#endif

#endif
