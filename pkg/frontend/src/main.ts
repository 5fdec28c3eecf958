// Entry point for the served bundle: mount on #app against the same node
// that is serving /console, so all /v1 calls stay same-origin.

import { mountApp } from "./app";

const root = document.getElementById("app");
if (root) mountApp(root);
