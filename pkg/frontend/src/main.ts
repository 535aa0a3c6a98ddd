import { ApiClient } from "./api.js";
import { mountApp } from "./app.js";

const params = new URLSearchParams(window.location.search);
const baseUrl = params.get("api") ?? "http://127.0.0.1:8080";
const token = params.get("token") ?? undefined;

const root = document.getElementById("app");
if (!root) throw new Error("missing #app container");
mountApp(root, new ApiClient(baseUrl, undefined, token));
