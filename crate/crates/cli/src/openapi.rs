//! OpenAPI description served at `/spec`.

use serde_json::{json, Value};

fn error_response(description: &str) -> Value {
    json!({ "description": description, "content": { "application/json": { "schema": { "$ref": "#/components/schemas/Error" } } } })
}

fn ok(description: &str, schema: Value) -> Value {
    json!({ "description": description, "content": { "application/json": { "schema": schema } } })
}

fn reference(name: &str) -> Value {
    json!({ "$ref": format!("#/components/schemas/{name}") })
}

fn path_param(name: &str) -> Value {
    json!({ "name": name, "in": "path", "required": true, "schema": { "type": "string" } })
}

pub fn document() -> Value {
    json!({
        "openapi": "3.0.3",
        "info": {
            "title": "ocelgan",
            "version": env!("CARGO_PKG_VERSION"),
            "description": "Suffix prediction for object-centric event logs."
        },
        "paths": {
            "/logs": {
                "post": {
                    "summary": "Upload an OCEL JSON log",
                    "requestBody": { "required": true, "content": { "application/json": { "schema": { "type": "object" } } } },
                    "responses": {
                        "201": ok("Stored", json!({ "type": "object", "properties": { "log_id": { "type": "string" } } })),
                        "400": error_response("Invalid log; details.field names the offending field")
                    }
                },
                "get": {
                    "summary": "List stored logs",
                    "responses": { "200": ok("Log ids", json!({ "type": "object", "properties": { "log_ids": { "type": "array", "items": { "type": "string" } } } })) }
                }
            },
            "/logs/{id}/stats": {
                "get": {
                    "summary": "Case statistics per object type, after outlier trimming",
                    "parameters": [path_param("id"), { "name": "object_type", "in": "query", "required": false, "schema": { "type": "string" } }],
                    "responses": {
                        "200": ok("Statistics", json!({ "type": "array", "items": reference("StatsRow") })),
                        "400": error_response("Unknown object type"),
                        "404": error_response("No such log")
                    }
                }
            },
            "/logs/{id}/relations": {
                "get": {
                    "summary": "Activities per object type",
                    "parameters": [path_param("id")],
                    "responses": {
                        "200": ok("Object type to activities", json!({ "type": "object", "additionalProperties": { "type": "array", "items": { "type": "string" } } })),
                        "404": error_response("No such log")
                    }
                }
            },
            "/logs/{id}/schema": {
                "get": {
                    "summary": "Activities and object attribute names",
                    "parameters": [path_param("id")],
                    "responses": {
                        "200": ok("Schema", reference("LogSchema")),
                        "404": error_response("No such log")
                    }
                }
            },
            "/trainings": {
                "post": {
                    "summary": "Start a training job",
                    "requestBody": { "required": true, "content": { "application/json": { "schema": reference("TrainRequest") } } },
                    "responses": {
                        "202": ok("Accepted", json!({ "type": "object", "properties": { "job_id": { "type": "string" } } })),
                        "400": error_response("Invalid request or config"),
                        "404": error_response("No such log"),
                        "409": error_response("A training job is already running")
                    }
                }
            },
            "/trainings/{job_id}": {
                "get": {
                    "summary": "Training job status and per-epoch progress",
                    "parameters": [path_param("job_id")],
                    "responses": {
                        "200": ok("Job", reference("JobRecord")),
                        "404": error_response("No such job")
                    }
                }
            },
            "/models": {
                "get": {
                    "summary": "Stored models with their checkpoint metrics",
                    "responses": { "200": ok("Models", json!({ "type": "array", "items": reference("ModelSummary") })) }
                }
            },
            "/models/{id}": {
                "get": {
                    "summary": "One model with its encoding schema",
                    "parameters": [path_param("id")],
                    "responses": {
                        "200": ok("Model", json!({ "type": "object", "properties": { "model": reference("ModelSummary"), "schema": { "type": "object" } } })),
                        "404": error_response("No such model")
                    }
                }
            },
            "/models/{id}/predict": {
                "post": {
                    "summary": "Predict the rest of a running case",
                    "parameters": [path_param("id")],
                    "requestBody": { "required": true, "content": { "application/json": { "schema": reference("PrefixRequest") } } },
                    "responses": {
                        "200": ok("Predicted suffix", reference("PredictResponse")),
                        "400": error_response("Malformed request"),
                        "404": error_response("No such model"),
                        "422": error_response("Empty prefix, unknown activity, unparseable or unordered timestamps")
                    }
                }
            },
            "/spec": {
                "get": { "summary": "This document", "responses": { "200": ok("OpenAPI document", json!({ "type": "object" })) } }
            }
        },
        "components": {
            "schemas": {
                "Error": {
                    "type": "object",
                    "required": ["code", "message", "details"],
                    "properties": { "code": { "type": "string" }, "message": { "type": "string" }, "details": {} }
                },
                "StatsRow": {
                    "type": "object",
                    "properties": {
                        "object_type": { "type": "string" },
                        "raw_cases": { "type": "integer" },
                        "count": { "type": "integer" },
                        "max_len": { "type": "integer" },
                        "min_len": { "type": "integer" },
                        "mean_len": { "type": "number" },
                        "max_dur": { "type": "number", "description": "seconds" },
                        "min_dur": { "type": "number", "description": "seconds" },
                        "mean_dur": { "type": "number", "description": "seconds" }
                    }
                },
                "LogSchema": {
                    "type": "object",
                    "properties": {
                        "activities": { "type": "array", "items": { "type": "string" } },
                        "object_attributes": { "type": "object", "additionalProperties": { "type": "array", "items": { "type": "string" } } }
                    }
                },
                "TrainRequest": {
                    "type": "object",
                    "required": ["log_id", "object_type"],
                    "properties": {
                        "log_id": { "type": "string" },
                        "object_type": { "type": "string" },
                        "attrs": { "type": "array", "items": { "type": "string" } },
                        "config": { "type": "object", "description": "Training config; omitted fields take their defaults" }
                    }
                },
                "JobRecord": {
                    "type": "object",
                    "properties": {
                        "job_id": { "type": "string" },
                        "kind": { "type": "string", "enum": ["train"] },
                        "status": { "type": "string", "enum": ["queued", "running", "done", "failed"] },
                        "config": reference("TrainRequest"),
                        "progress": {
                            "type": "object",
                            "properties": {
                                "epoch": { "type": "integer" },
                                "epochs": { "type": "integer" },
                                "history": { "type": "array", "items": reference("EpochRecord") }
                            }
                        },
                        "model_id": { "type": "string", "nullable": true },
                        "error": { "allOf": [reference("Error")], "nullable": true }
                    }
                },
                "EpochRecord": {
                    "type": "object",
                    "properties": {
                        "epoch": { "type": "integer" },
                        "loss_d": { "type": "number" },
                        "loss_g": { "type": "number" },
                        "val_similarity": { "type": "number", "nullable": true },
                        "val_mae": { "type": "number", "nullable": true }
                    }
                },
                "ModelSummary": {
                    "type": "object",
                    "properties": {
                        "model_id": { "type": "string" },
                        "source": { "type": "object", "nullable": true },
                        "best_epoch": { "type": "integer", "nullable": true },
                        "metrics": { "type": "object", "nullable": true },
                        "config": { "type": "object" }
                    }
                },
                "PrefixRequest": {
                    "type": "object",
                    "required": ["object_type", "events"],
                    "properties": {
                        "object_type": { "type": "string" },
                        "events": {
                            "type": "array",
                            "minItems": 1,
                            "items": {
                                "type": "object",
                                "required": ["activity", "timestamp"],
                                "properties": {
                                    "activity": { "type": "string" },
                                    "timestamp": { "type": "string" },
                                    "object_id": { "type": "string" }
                                }
                            }
                        },
                        "object_attributes": { "type": "object" }
                    }
                },
                "PredictResponse": {
                    "type": "object",
                    "properties": {
                        "suffix": {
                            "type": "array",
                            "items": {
                                "type": "object",
                                "properties": { "activity": { "type": "string" }, "timestamp": { "type": "string" } }
                            }
                        },
                        "similarity_hint": { "type": "number", "nullable": true }
                    }
                }
            }
        }
    })
}
