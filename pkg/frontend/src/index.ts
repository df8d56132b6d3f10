export * from "./types";
export * from "./state";
export * from "./render";
export * from "./client";
